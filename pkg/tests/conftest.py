import numpy as np
import pytest

from gridsense import LoadProfile, generate_dataset, hybrid_importance, load_case, make_splits
from gridsense.network import Branch, Bus, PowerNetwork

KIND_OF = {"s": "slack", "g": "generator", "l": "load"}


def build_net(kinds, edges, *, loads=None, gen_p=None, capacity=None,
              setpoints=None, shunts=None, base_mva=100.0, labels=None):
    """Small-network factory for fixtures.

    kinds is a string like "sgl" (slack/generator/load per bus); edges are
    (f, t) with optional (r, x, b, tap) tail entries. All quantities are
    already in per unit.
    """
    n = len(kinds)
    loads = loads if loads is not None else [(0.0, 0.0)] * n
    gen_p = gen_p if gen_p is not None else [0.0] * n
    capacity = capacity if capacity is not None else \
        [1.0 if k in "sg" else 0.0 for k in kinds]
    setpoints = setpoints if setpoints is not None else [1.0] * n
    shunts = shunts if shunts is not None else [(0.0, 0.0)] * n
    labels = labels if labels is not None else list(range(1, n + 1))
    buses = [
        Bus(id=i, label=labels[i], kind=KIND_OF[kinds[i]],
            base_load_p=loads[i][0], base_load_q=loads[i][1],
            shunt_g=shunts[i][0], shunt_b=shunts[i][1],
            voltage_setpoint=setpoints[i], gen_p=gen_p[i], gen_capacity=capacity[i])
        for i in range(n)
    ]
    branches = []
    for edge in edges:
        f, t, *rest = edge
        r, x, b, tap = (list(rest) + [0.01, 0.1, 0.0, 1.0][len(rest):])
        branches.append(Branch(from_bus=f, to_bus=t, r=r, x=x, b=b, tap=tap))
    return PowerNetwork(buses, branches, base_mva=base_mva, name="toy")


@pytest.fixture()
def make_net():
    return build_net


@pytest.fixture(scope="session")
def case14():
    return load_case("case14")


@pytest.fixture(scope="session")
def case14_frames(case14):
    """160 benign frames from the default daily profile (seed 0)."""
    return generate_dataset(case14, LoadProfile.daily(case14.n, 160, seed=0))


@pytest.fixture(scope="session")
def case14_scores(case14):
    return hybrid_importance(case14)


@pytest.fixture(scope="session")
def case14_splits(case14, case14_frames):
    return make_splits(case14, case14_frames, seed=0)


@pytest.fixture()
def fast_detector_params():
    """Reduced training budget for tests that only need a working detector."""
    return {"hidden": 16, "epochs": 30, "batch_size": 16}
