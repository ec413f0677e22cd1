"""Physics-regularized message-passing attack detector.

A small graph network implemented directly in numpy with hand-derived
reverse-mode gradients:

* input per bus: the six measurement channels, standardized per (bus, channel)
  against the training data and zero-filled where unobserved (masked entries
  are exactly zero regardless of their raw values), plus a 7th column flagging
  sensor buses;
* ``layers`` rounds of message passing, each ``tanh(H W_self + (A_norm H)
  W_nbr + b)`` where ``A_norm`` is the row-normalized adjacency (mean over
  neighbors);
* two heads on the final node embeddings: a mean-pooled classification logit,
  and a per-bus reconstruction of the six physical channels.

The loss is ``data_weight * (BCE + recon_weight * masked reconstruction MSE)
+ physics_weight * (L_P + L_Q)`` where the physics terms penalize violations
of ``P = V I cos(theta - delta)`` / ``Q = V I sin(theta - delta)`` *by the
reconstructed channels* (``reactive_residual="cos"`` selects the cosine
variant of the reactive term). Reconstruction targets are the raw physical
values, so the physics terms live in physical units.

Training keeps the parameters of the best validation epoch. All randomness
derives from ``seed``; repeated fits are bitwise identical.
"""
from __future__ import annotations

import warnings

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .utils.validation import check_adjacency, check_channel_tensor, check_genome

_ADAM_B1 = 0.9
_ADAM_B2 = 0.999
_ADAM_EPS = 1e-8


def row_normalized(adjacency: np.ndarray) -> np.ndarray:
    """Adjacency scaled so each row sums to 1 (isolated buses keep zero rows)."""
    a = check_adjacency(adjacency).astype(float)
    deg = a.sum(axis=1, keepdims=True)
    return np.divide(a, deg, out=np.zeros_like(a), where=deg > 0)


def init_params(rng: np.random.Generator, n_in: int, hidden: int, layers: int) -> dict:
    """Glorot-scaled weights for the message-passing layers and both heads."""
    params: dict[str, np.ndarray] = {}
    dim = n_in
    for layer in range(layers):
        for name in ("w_self", "w_nbr"):
            scale = np.sqrt(2.0 / (dim + hidden))
            params[f"{name}_{layer}"] = rng.normal(0.0, scale, size=(dim, hidden))
        params[f"b_{layer}"] = np.zeros(hidden)
        dim = hidden
    params["w_rec"] = rng.normal(0.0, np.sqrt(2.0 / (hidden + 6)), size=(hidden, 6))
    params["b_rec"] = np.zeros(6)
    params["w_cls"] = rng.normal(0.0, np.sqrt(1.0 / hidden), size=hidden)
    params["b_cls"] = np.zeros(())
    return params


def forward(params: dict, feats: np.ndarray, anorm: np.ndarray, layers: int):
    """Returns (logits (B,), recon (B,N,6), hidden-state cache)."""
    hs = [feats]
    h = feats
    for layer in range(layers):
        msg = np.matmul(anorm, h)
        u = h @ params[f"w_self_{layer}"] + msg @ params[f"w_nbr_{layer}"] + params[f"b_{layer}"]
        h = np.tanh(u)
        hs.append(h)
    pooled = h.mean(axis=1)
    logits = pooled @ params["w_cls"] + params["b_cls"]
    recon = h @ params["w_rec"] + params["b_rec"]
    return logits, recon, hs


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def loss_terms(
    logits: np.ndarray,
    recon: np.ndarray,
    y: np.ndarray,
    x_raw: np.ndarray,
    observed: np.ndarray,
    *,
    data_weight: float,
    physics_weight: float,
    recon_weight: float,
    reactive: str,
) -> dict[str, float]:
    """All loss components plus the total, averaged over the batch."""
    batch = logits.shape[0]
    n = x_raw.shape[1]
    bce = float(np.mean(np.logaddexp(0.0, logits) - y * logits))
    n_obs = max(1.0, float(observed.sum()))
    rec_err = (recon - x_raw) * observed
    rec = float((rec_err**2).sum() / (batch * n_obs))

    v, i, th, de = recon[..., 0], recon[..., 1], recon[..., 2], recon[..., 3]
    ang = th - de
    e_p = recon[..., 4] - v * i * np.cos(ang)
    f_q = np.sin if reactive == "sin" else np.cos
    e_q = recon[..., 5] - v * i * f_q(ang)
    l_p = float((e_p**2).sum() / (batch * n))
    l_q = float((e_q**2).sum() / (batch * n))

    data = bce + recon_weight * rec
    total = data_weight * data + physics_weight * (l_p + l_q)
    return {
        "total": total,
        "data": data,
        "bce": bce,
        "recon": rec,
        "physics_p": l_p,
        "physics_q": l_q,
    }


def loss_and_gradients(
    params: dict,
    feats: np.ndarray,
    x_raw: np.ndarray,
    y: np.ndarray,
    anorm: np.ndarray,
    observed: np.ndarray,
    *,
    layers: int,
    data_weight: float,
    physics_weight: float,
    recon_weight: float,
    reactive: str,
) -> tuple[dict[str, float], dict[str, np.ndarray]]:
    """Loss components and exact gradients for one batch (reverse-mode, by hand)."""
    logits, recon, hs = forward(params, feats, anorm, layers)
    losses = loss_terms(
        logits, recon, y, x_raw, observed,
        data_weight=data_weight, physics_weight=physics_weight,
        recon_weight=recon_weight, reactive=reactive,
    )
    batch, n = feats.shape[0], feats.shape[1]
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    h_last = hs[-1]

    # classification head
    dz = data_weight * (_sigmoid(logits) - y) / batch
    grads["w_cls"] = h_last.mean(axis=1).T @ dz
    grads["b_cls"] = np.asarray(dz.sum())
    dh = (dz[:, None] * params["w_cls"][None, :])[:, None, :] / n  # pooled mean

    # reconstruction + physics head
    n_obs = max(1.0, float(observed.sum()))
    d_recon = data_weight * recon_weight * 2.0 * observed * (recon - x_raw) / (batch * n_obs)

    v, i, th, de = recon[..., 0], recon[..., 1], recon[..., 2], recon[..., 3]
    ang = th - de
    cos_a, sin_a = np.cos(ang), np.sin(ang)
    e_p = recon[..., 4] - v * i * cos_a
    k_p = physics_weight * 2.0 / (batch * n)
    d_recon[..., 4] += k_p * e_p
    d_recon[..., 0] += -k_p * e_p * i * cos_a
    d_recon[..., 1] += -k_p * e_p * v * cos_a
    d_recon[..., 2] += k_p * e_p * v * i * sin_a
    d_recon[..., 3] += -k_p * e_p * v * i * sin_a
    if reactive == "sin":
        e_q = recon[..., 5] - v * i * sin_a
        k_q = physics_weight * 2.0 / (batch * n)
        d_recon[..., 5] += k_q * e_q
        d_recon[..., 0] += -k_q * e_q * i * sin_a
        d_recon[..., 1] += -k_q * e_q * v * sin_a
        d_recon[..., 2] += -k_q * e_q * v * i * cos_a
        d_recon[..., 3] += k_q * e_q * v * i * cos_a
    else:
        e_q = recon[..., 5] - v * i * cos_a
        k_q = physics_weight * 2.0 / (batch * n)
        d_recon[..., 5] += k_q * e_q
        d_recon[..., 0] += -k_q * e_q * i * cos_a
        d_recon[..., 1] += -k_q * e_q * v * cos_a
        d_recon[..., 2] += k_q * e_q * v * i * sin_a
        d_recon[..., 3] += -k_q * e_q * v * i * sin_a

    grads["w_rec"] = np.einsum("bnh,bnc->hc", h_last, d_recon)
    grads["b_rec"] = d_recon.sum(axis=(0, 1))
    dh = dh + d_recon @ params["w_rec"].T

    # message-passing layers, last to first
    for layer in range(layers - 1, -1, -1):
        h_out, h_in = hs[layer + 1], hs[layer]
        du = dh * (1.0 - h_out**2)
        msg = np.matmul(anorm, h_in)
        grads[f"w_self_{layer}"] = np.einsum("bni,bnh->ih", h_in, du)
        grads[f"w_nbr_{layer}"] = np.einsum("bni,bnh->ih", msg, du)
        grads[f"b_{layer}"] = du.sum(axis=(0, 1))
        dh = du @ params[f"w_self_{layer}"].T + np.matmul(
            anorm.T, du @ params[f"w_nbr_{layer}"].T
        )
    return losses, grads


class AttackDetector(BaseEstimator, ClassifierMixin):
    """Graph-based attack classifier with masked-channel inputs.

    Parameters mirror scikit-learn conventions: everything is set in
    ``__init__`` and validated in :meth:`fit`. ``adjacency`` is the bus graph;
    ``observed`` (N, 6 bool) and ``sensor_mask`` (N, bool) describe which
    channels reach the model — unobserved channels are zeroed out before the
    network ever sees them, so predictions are invariant to their values.
    """

    def __init__(
        self,
        adjacency=None,
        observed=None,
        sensor_mask=None,
        hidden: int = 32,
        layers: int = 2,
        epochs: int = 150,
        batch_size: int = 16,
        learning_rate: float = 0.01,
        data_weight: float = 1.0,
        physics_weight: float = 0.2,
        recon_weight: float = 0.1,
        reactive_residual: str = "sin",
        val_fraction: float = 0.3,
        seed: int = 0,
    ):
        self.adjacency = adjacency
        self.observed = observed
        self.sensor_mask = sensor_mask
        self.hidden = hidden
        self.layers = layers
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.data_weight = data_weight
        self.physics_weight = physics_weight
        self.recon_weight = recon_weight
        self.reactive_residual = reactive_residual
        self.val_fraction = val_fraction
        self.seed = seed

    # -- plumbing ------------------------------------------------------------

    def _masks(self, n: int, observed, sensor_mask) -> tuple[np.ndarray, np.ndarray]:
        if observed is None:
            observed = self.observed
        if sensor_mask is None:
            sensor_mask = self.sensor_mask
        obs = np.ones((n, 6), dtype=bool) if observed is None else np.asarray(observed, bool)
        if obs.shape != (n, 6):
            raise ValueError(f"observed must have shape ({n}, 6), got {obs.shape}")
        mask = np.zeros(n, bool) if sensor_mask is None else check_genome(sensor_mask, n)
        return obs | mask[:, None], mask

    def _features(self, x: np.ndarray, obs: np.ndarray, mask: np.ndarray) -> np.ndarray:
        xs = ((x - self.channel_loc_) / self.channel_scale_) * obs
        cols = np.broadcast_to(mask.astype(float)[:, None], (x.shape[0], x.shape[1], 1))
        return np.concatenate([xs, cols], axis=2)

    def _check_ready(self):
        if not hasattr(self, "params_"):
            raise RuntimeError("detector is not fitted")

    # -- estimator API ---------------------------------------------------------

    def fit(self, X, y):
        if self.adjacency is None:
            raise ValueError("adjacency is required")
        if self.reactive_residual not in ("sin", "cos"):
            raise ValueError(f"reactive_residual must be 'sin' or 'cos', got {self.reactive_residual!r}")
        if self.layers < 1 or self.hidden < 1:
            raise ValueError("layers and hidden must be positive")
        anorm = row_normalized(self.adjacency)
        n = anorm.shape[0]
        x = check_channel_tensor(X, n)
        y = np.asarray(y)
        if y.shape != (x.shape[0],):
            raise ValueError(f"y must have shape ({x.shape[0]},), got {y.shape}")
        if not np.all(np.isin(y, (0, 1))):
            raise ValueError("labels must be 0/1")
        if np.unique(y).size < 2:
            raise ValueError("training data must contain both classes")
        y = y.astype(float)
        obs, mask = self._masks(n, None, None)
        if not obs.any():
            raise ValueError("no observable channels: empty observability and no sensors")

        self.channel_loc_ = x.mean(axis=0)
        self.channel_scale_ = np.maximum(x.std(axis=0), 1e-4)
        self._anorm_ = anorm
        self._obs_ = obs
        self._mask_ = mask
        self.classes_ = np.array([0, 1])

        feats = self._features(x, obs, mask)
        rng = np.random.default_rng([self.seed, 0])
        params = init_params(rng, feats.shape[2], self.hidden, self.layers)

        train_idx, val_idx = self._split(y, np.random.default_rng([self.seed, 1]))
        shuffle_rng = np.random.default_rng([self.seed, 2])

        opt_m = {k: np.zeros_like(v) for k, v in params.items()}
        opt_v = {k: np.zeros_like(v) for k, v in params.items()}
        step = 0
        loss_kwargs = dict(
            data_weight=self.data_weight,
            physics_weight=self.physics_weight,
            recon_weight=self.recon_weight,
            reactive=self.reactive_residual,
        )
        kwargs = dict(layers=self.layers, **loss_kwargs)
        best = (np.inf, None)
        history = []
        for epoch in range(self.epochs):
            order = shuffle_rng.permutation(train_idx)
            train_loss = 0.0
            for start in range(0, order.size, self.batch_size):
                batch = order[start : start + self.batch_size]
                losses, grads = loss_and_gradients(
                    params, feats[batch], x[batch], y[batch], anorm, obs, **kwargs
                )
                if not np.isfinite(losses["total"]):
                    raise FloatingPointError(
                        f"training diverged at epoch {epoch}, step {step}: "
                        f"loss components {losses}"
                    )
                train_loss += losses["total"] * batch.size
                step += 1
                lr_t = self.learning_rate * np.sqrt(1 - _ADAM_B2**step) / (1 - _ADAM_B1**step)
                for k, g in grads.items():
                    opt_m[k] = _ADAM_B1 * opt_m[k] + (1 - _ADAM_B1) * g
                    opt_v[k] = _ADAM_B2 * opt_v[k] + (1 - _ADAM_B2) * g**2
                    params[k] = params[k] - lr_t * opt_m[k] / (np.sqrt(opt_v[k]) + _ADAM_EPS)
            logits, recon, _ = forward(params, feats[val_idx], anorm, self.layers)
            val = loss_terms(logits, recon, y[val_idx], x[val_idx], obs, **loss_kwargs)
            row = {
                "epoch": epoch,
                "train_total": train_loss / max(1, order.size),
                "val_total": val["total"],
                "val_data": val["data"],
                "val_physics": val["physics_p"] + val["physics_q"],
            }
            history.append(row)
            if val["total"] < best[0]:
                best = (val["total"], {k: v.copy() for k, v in params.items()}, epoch)
        self.params_ = best[1]
        self.best_val_loss_ = float(best[0])
        self.best_epoch_ = int(best[2])
        self.history_ = history
        return self

    def _split(self, y: np.ndarray, rng: np.random.Generator):
        idx = np.arange(y.shape[0])
        val: list[np.ndarray] = []
        train: list[np.ndarray] = []
        for cls in (0.0, 1.0):
            members = rng.permutation(idx[y == cls])
            n_val = int(round(self.val_fraction * members.size))
            if members.size > 1:
                n_val = min(n_val, members.size - 1)
            val.append(members[:n_val])
            train.append(members[n_val:])
        train_idx = np.sort(np.concatenate(train))
        val_idx = np.sort(np.concatenate(val))
        if train_idx.size == 0:
            raise ValueError("training split is empty")
        if val_idx.size == 0:
            warnings.warn("validation split is empty; validating on the training data",
                          stacklevel=2)
            val_idx = train_idx
        return train_idx, val_idx

    def _prepared(self, X, observed, sensor_mask):
        self._check_ready()
        n = self._anorm_.shape[0]
        x = check_channel_tensor(X, n)
        obs, mask = self._masks(n, observed, sensor_mask)
        return x, self._features(x, obs, mask), obs

    def decision_function(self, X, observed=None, sensor_mask=None) -> np.ndarray:
        _, feats, _ = self._prepared(X, observed, sensor_mask)
        logits, _, _ = forward(self.params_, feats, self._anorm_, self.layers)
        return logits

    def predict_proba(self, X, observed=None, sensor_mask=None) -> np.ndarray:
        p = _sigmoid(self.decision_function(X, observed, sensor_mask))
        return np.column_stack([1.0 - p, p])

    def predict(self, X, observed=None, sensor_mask=None) -> np.ndarray:
        return (self.decision_function(X, observed, sensor_mask) > 0.0).astype(int)

    def reconstruct(self, X, observed=None, sensor_mask=None) -> np.ndarray:
        _, feats, _ = self._prepared(X, observed, sensor_mask)
        _, recon, _ = forward(self.params_, feats, self._anorm_, self.layers)
        return recon

    def loss_components(self, X, y, observed=None, sensor_mask=None) -> dict[str, float]:
        x, feats, obs = self._prepared(X, observed, sensor_mask)
        logits, recon, _ = forward(self.params_, feats, self._anorm_, self.layers)
        return loss_terms(
            logits, recon, np.asarray(y, float), x, obs,
            data_weight=self.data_weight,
            physics_weight=self.physics_weight,
            recon_weight=self.recon_weight,
            reactive=self.reactive_residual,
        )


