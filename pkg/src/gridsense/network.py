"""Power-network model: text case format, admittance matrices, graph views.

Case files are plain UTF-8 text with ``#`` comments, a ``BASE_MVA`` line and
three sections introduced by ``BUS``, ``GEN`` and ``BRANCH`` headers::

    BASE_MVA 100.0

    BUS
    # id  type  Pd_MW  Qd_MVAr  Gs_MW  Bs_MVAr     (type: 1 load, 2 generator, 3 slack)
    1  3   0.0   0.0   0.0  0.0
    2  2  21.7  12.7   0.0  0.0

    GEN
    # bus  Pg_MW  Vset_pu  Pmax_MW
    1  232.4  1.060  332.4

    BRANCH
    # from  to  r_pu  x_pu  b_pu  tap     (tap 0 means an ordinary line)
    1  2  0.01938  0.05917  0.0528  0

All MW/MVAr quantities are converted to per unit on BASE_MVA at parse time.
Buses are renumbered to contiguous 0-based indices in ascending id order; the
original file ids are kept as labels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .exceptions import CaseFormatError

BUS_KIND_CODES = {1: "load", 2: "generator", 3: "slack"}
_CODE_OF_KIND = {v: k for k, v in BUS_KIND_CODES.items()}


@dataclass(frozen=True)
class Bus:
    """One bus of the network. Loads/generation are in per unit on system base."""

    id: int                  # contiguous 0-based index
    label: int               # id as written in the case file
    kind: str                # "slack" | "generator" | "load"
    base_load_p: float
    base_load_q: float
    shunt_g: float
    shunt_b: float
    voltage_setpoint: float  # regulated magnitude for slack/generator buses
    gen_p: float             # scheduled active generation
    gen_capacity: float


@dataclass(frozen=True)
class Branch:
    """A line or transformer between two buses (0-based indices)."""

    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float      # total line charging susceptance
    tap: float    # off-nominal turns ratio; 1.0 for ordinary lines


class PowerNetwork:
    """Immutable network: buses, branches, admittance matrices and graph views."""

    def __init__(self, buses, branches, base_mva: float = 100.0, name: str = ""):
        buses = tuple(buses)
        branches = tuple(branches)
        if not buses:
            raise CaseFormatError("case has no buses")
        if base_mva <= 0:
            raise CaseFormatError(f"BASE_MVA must be positive, got {base_mva}")
        n = len(buses)
        for b in buses:
            if b.kind not in _CODE_OF_KIND:
                raise CaseFormatError(f"bus {b.label}: unknown kind {b.kind!r}")
        slacks = [b.id for b in buses if b.kind == "slack"]
        if len(slacks) != 1:
            raise CaseFormatError(f"case must have exactly one slack bus, found {len(slacks)}")
        for br in branches:
            if br.from_bus == br.to_bus:
                raise CaseFormatError(f"branch {br.from_bus}-{br.to_bus}: self-loop")
            if not (0 <= br.from_bus < n and 0 <= br.to_bus < n):
                raise CaseFormatError(f"branch references unknown bus index {br.from_bus}-{br.to_bus}")
            if br.r == 0.0 and br.x == 0.0:
                raise CaseFormatError(f"branch {br.from_bus}-{br.to_bus}: zero impedance")
            if br.tap <= 0:
                raise CaseFormatError(f"branch {br.from_bus}-{br.to_bus}: tap must be positive")

        self._buses = buses
        self._branches = branches
        self._base_mva = float(base_mva)
        self._name = name
        self._slack = slacks[0]

        adj = np.zeros((n, n), dtype=bool)
        for br in branches:
            adj[br.from_bus, br.to_bus] = True
            adj[br.to_bus, br.from_bus] = True
        adj.setflags(write=False)
        self._adjacency = adj
        self._neighbors = tuple(np.flatnonzero(adj[i]) for i in range(n))
        self._ybus = None
        self._zbus = None

    # -- basic accessors ---------------------------------------------------

    @property
    def n(self) -> int:
        return len(self._buses)

    @property
    def buses(self) -> tuple[Bus, ...]:
        return self._buses

    @property
    def branches(self) -> tuple[Branch, ...]:
        return self._branches

    @property
    def base_mva(self) -> float:
        return self._base_mva

    @property
    def name(self) -> str:
        return self._name

    @property
    def labels(self) -> np.ndarray:
        return np.array([b.label for b in self._buses])

    @property
    def slack(self) -> int:
        return self._slack

    @property
    def kinds(self) -> np.ndarray:
        return np.array([b.kind for b in self._buses])

    @property
    def generator_indices(self) -> np.ndarray:
        return np.array([b.id for b in self._buses if b.kind == "generator"], dtype=int)

    @property
    def load_indices(self) -> np.ndarray:
        return np.array([b.id for b in self._buses if b.kind == "load"], dtype=int)

    @property
    def base_load(self) -> np.ndarray:
        """Per-bus (P, Q) base load in per unit, shape (N, 2)."""
        return np.array([[b.base_load_p, b.base_load_q] for b in self._buses])

    @property
    def gen_schedule(self) -> np.ndarray:
        """Scheduled active generation per bus in per unit."""
        return np.array([b.gen_p for b in self._buses])

    @property
    def voltage_setpoints(self) -> np.ndarray:
        return np.array([b.voltage_setpoint for b in self._buses])

    # -- graph views -------------------------------------------------------

    @property
    def adjacency(self) -> np.ndarray:
        return self._adjacency

    def neighbors(self, i: int) -> np.ndarray:
        return self._neighbors[i]

    @property
    def degrees(self) -> np.ndarray:
        return self._adjacency.sum(axis=1)

    def is_connected(self, mask=None) -> bool:
        """BFS connectivity of the full graph or of the induced subgraph ``mask``."""
        if mask is None:
            nodes = np.arange(self.n)
        else:
            nodes = np.flatnonzero(np.asarray(mask, dtype=bool))
        if nodes.size == 0:
            return False
        keep = np.zeros(self.n, dtype=bool)
        keep[nodes] = True
        seen = {int(nodes[0])}
        stack = [int(nodes[0])]
        while stack:
            u = stack.pop()
            for v in self._neighbors[u]:
                v = int(v)
                if keep[v] and v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == nodes.size

    # -- admittance matrices -----------------------------------------------

    @property
    def ybus(self) -> np.ndarray:
        if self._ybus is None:
            y = build_ybus(self)
            y.setflags(write=False)
            self._ybus = y
        return self._ybus

    @property
    def zbus(self) -> np.ndarray:
        if self._zbus is None:
            z = build_zbus(self)
            z.setflags(write=False)
            self._zbus = z
        return self._zbus


def build_ybus(network: PowerNetwork) -> np.ndarray:
    """Assemble the complex bus admittance matrix from branch and shunt data.

    A branch with series admittance ``ys = 1/(r + jx)``, total charging ``b``
    and tap ratio ``a`` (on the from side) stamps::

        Y[f,f] += (ys + jb/2) / a**2      Y[f,t] -= ys / a
        Y[t,t] +=  ys + jb/2              Y[t,f] -= ys / a

    Bus shunts add ``g + jb`` on the diagonal.
    """
    n = network.n
    y = np.zeros((n, n), dtype=complex)
    for br in network.branches:
        ys = 1.0 / complex(br.r, br.x)
        shunt = 0.5j * br.b
        a = br.tap
        f, t = br.from_bus, br.to_bus
        y[f, f] += (ys + shunt) / (a * a)
        y[t, t] += ys + shunt
        y[f, t] -= ys / a
        y[t, f] -= ys / a
    for b in network.buses:
        y[b.id, b.id] += complex(b.shunt_g, b.shunt_b)
    return y


def build_zbus(network: PowerNetwork) -> np.ndarray:
    """Bus impedance matrix: exact inverse of Ybus when nonsingular, else pseudo-inverse."""
    y = network.ybus
    n = y.shape[0]
    if np.linalg.matrix_rank(y) == n:
        return np.linalg.inv(y)
    return np.linalg.pinv(y)


# -- case file parsing -----------------------------------------------------

_SECTIONS = ("BUS", "GEN", "BRANCH")


def parse_case_text(text: str, name: str = "case") -> PowerNetwork:
    """Parse a case from text. See the module docstring for the format."""
    base_mva = None
    section = None
    bus_rows: list[tuple[int, list[float]]] = []
    gen_rows: list[tuple[int, list[float]]] = []
    branch_rows: list[tuple[int, list[float]]] = []

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        head = tokens[0].upper()
        if head == "BASE_MVA":
            if len(tokens) != 2:
                raise CaseFormatError("BASE_MVA expects one value", lineno)
            base_mva = _num(tokens[1], lineno)
            continue
        if head in _SECTIONS and len(tokens) == 1:
            section = head
            continue
        if section is None:
            raise CaseFormatError(f"data row before any section header: {line!r}", lineno)
        values = [_num(t, lineno) for t in tokens]
        if section == "BUS":
            if len(values) != 6:
                raise CaseFormatError(f"BUS row expects 6 columns, got {len(values)}", lineno)
            bus_rows.append((lineno, values))
        elif section == "GEN":
            if len(values) != 4:
                raise CaseFormatError(f"GEN row expects 4 columns, got {len(values)}", lineno)
            gen_rows.append((lineno, values))
        else:
            if len(values) != 6:
                raise CaseFormatError(f"BRANCH row expects 6 columns, got {len(values)}", lineno)
            branch_rows.append((lineno, values))

    if base_mva is None:
        raise CaseFormatError("missing BASE_MVA line")
    if base_mva <= 0:
        raise CaseFormatError(f"BASE_MVA must be positive, got {base_mva}")
    if not bus_rows:
        raise CaseFormatError("case has no BUS rows")

    labels = []
    for lineno, v in bus_rows:
        label = int(v[0])
        if label in labels:
            raise CaseFormatError(f"duplicate bus id {label}", lineno)
        labels.append(label)
    order = sorted(range(len(labels)), key=lambda k: labels[k])
    index_of = {labels[k]: i for i, k in enumerate(order)}

    gens: dict[int, list[float]] = {}
    for lineno, v in gen_rows:
        label = int(v[0])
        if label not in index_of:
            raise CaseFormatError(f"GEN row references unknown bus {label}", lineno)
        pg, vset, cap = v[1], v[2], v[3]
        if label in gens:
            prev = gens[label]
            if not math.isclose(prev[1], vset, rel_tol=0, abs_tol=1e-9):
                raise CaseFormatError(f"conflicting voltage setpoints at bus {label}", lineno)
            gens[label] = [prev[0] + pg, vset, prev[2] + cap]
        else:
            gens[label] = [pg, vset, cap]

    buses = []
    for i, k in enumerate(order):
        lineno, v = bus_rows[k]
        label, code = int(v[0]), int(v[1])
        if code not in BUS_KIND_CODES:
            raise CaseFormatError(f"bus {label}: unknown type code {code}", lineno)
        kind = BUS_KIND_CODES[code]
        gen = gens.pop(label, None)
        if kind in ("slack", "generator") and gen is None:
            raise CaseFormatError(f"bus {label} is type {code} but has no GEN row", lineno)
        if kind == "load" and gen is not None:
            raise CaseFormatError(f"bus {label} is a load bus but has a GEN row", lineno)
        pg, vset, cap = gen if gen is not None else (0.0, 1.0, 0.0)
        buses.append(
            Bus(
                id=i,
                label=label,
                kind=kind,
                base_load_p=v[2] / base_mva,
                base_load_q=v[3] / base_mva,
                shunt_g=v[4] / base_mva,
                shunt_b=v[5] / base_mva,
                voltage_setpoint=vset,
                gen_p=pg / base_mva,
                gen_capacity=cap / base_mva,
            )
        )
    if gens:
        raise CaseFormatError(f"GEN rows for unknown buses: {sorted(gens)}")

    branches = []
    for lineno, v in branch_rows:
        f_label, t_label = int(v[0]), int(v[1])
        for lab in (f_label, t_label):
            if lab not in index_of:
                raise CaseFormatError(f"branch references unknown bus {lab}", lineno)
        tap = v[5] if v[5] != 0.0 else 1.0
        branches.append(
            Branch(
                from_bus=index_of[f_label],
                to_bus=index_of[t_label],
                r=v[2],
                x=v[3],
                b=v[4],
                tap=tap,
            )
        )
    return PowerNetwork(buses, branches, base_mva=base_mva, name=name)


def _num(token: str, lineno: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise CaseFormatError(f"expected a number, got {token!r}", lineno) from None


def parse_case(path) -> PowerNetwork:
    """Parse a case file from ``path``."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    import os

    name = os.path.splitext(os.path.basename(str(path)))[0]
    return parse_case_text(text, name=name)


def write_case(network: PowerNetwork, path) -> None:
    """Write a network back to the text case format (round-trips via parse_case)."""
    base = network.base_mva
    lines = [f"# {network.name}", f"BASE_MVA {base!r}", "", "BUS",
             "# id  type  Pd_MW  Qd_MVAr  Gs_MW  Bs_MVAr"]
    for b in network.buses:
        lines.append(
            f"{b.label} {_CODE_OF_KIND[b.kind]} {b.base_load_p * base!r} {b.base_load_q * base!r} "
            f"{b.shunt_g * base!r} {b.shunt_b * base!r}"
        )
    lines += ["", "GEN", "# bus  Pg_MW  Vset_pu  Pmax_MW"]
    for b in network.buses:
        if b.kind in ("slack", "generator"):
            lines.append(f"{b.label} {b.gen_p * base!r} {b.voltage_setpoint!r} {b.gen_capacity * base!r}")
    lines += ["", "BRANCH", "# from  to  r_pu  x_pu  b_pu  tap"]
    labels = network.labels
    for br in network.branches:
        tap = 0.0 if br.tap == 1.0 else br.tap
        lines.append(f"{labels[br.from_bus]} {labels[br.to_bus]} {br.r!r} {br.x!r} {br.b!r} {tap!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def list_cases() -> list[str]:
    """Names of the bundled cases."""
    root = resources.files("gridsense.cases")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".case"))


def load_case(name: str) -> PowerNetwork:
    """Load a bundled case by name (e.g. ``case14``) or parse ``name`` as a path."""
    root = resources.files("gridsense.cases")
    candidate = root.joinpath(f"{name}.case")
    if candidate.is_file():
        return parse_case_text(candidate.read_text(encoding="utf-8"), name=name)
    import os

    if os.path.exists(name):
        return parse_case(name)
    raise CaseFormatError(f"unknown case {name!r}; bundled cases: {', '.join(list_cases())}")
