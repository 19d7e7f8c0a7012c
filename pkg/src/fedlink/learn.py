"""Desk-scale strongly convex learning tasks for federated experiments.

The model is l2-regularized binary logistic regression on synthetic data
drawn from ten Gaussian clusters (cluster 0 is the positive class, the rest
are negative).  Feature vectors live in R^(dim); the model appends an
intercept coordinate, so model vectors live in R^(dim+1).  Per-sample
gradients are norm-clipped so the gradient bound holds by construction
rather than by hope.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Sequence

import numpy as np

from .core import LearningConstants

NUM_CLUSTERS = 10
POSITIVE_CLUSTER = 0
CLUSTER_CENTER_SCALE = 2.0
CLUSTER_STD = 1.0
DEFAULT_REG = 0.1
PROBE_RADIUS = 10.0
PROBE_MARGIN = 1.1


class ConvergenceError(RuntimeError):
    """A gradient-descent solve ran out of iterations."""


@dataclasses.dataclass(frozen=True, eq=False)
class LocalDataset:
    """One device's samples: features (n, dim) and binary labels (n,)."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.features.ndim != 2 or self.labels.ndim != 1:
            raise ValueError("features must be (n, dim), labels must be (n,)")
        if len(self.features) != len(self.labels) or len(self.labels) < 1:
            raise ValueError("need at least one sample with matching label count")

    @property
    def count(self) -> int:
        return len(self.labels)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def model_dim(self) -> int:
        return self.features.shape[1] + 1


def gen_synthetic_fleet(
    K: int,
    classes_per_device: int,
    seed: int,
    *,
    feature_dim: int = 7,
    size_scale: float = 30.0,
    size_sigma: float = 0.75,
    min_size: int = 10,
    max_size: int = 400,
    center_seed: int | None = None,
) -> list[LocalDataset]:
    """Generate ``K`` non-IID local datasets, bit-identical for a given seed.

    Device k always holds its primary cluster (k mod 10) so the pooled fleet
    covers every cluster once K >= 10; with two classes per device, a second
    cluster is drawn at random.  Dataset sizes follow a clipped log-normal
    round(size_scale * LogNormal(0, size_sigma)) so aggregation weights come
    out imbalanced.

    ``center_seed`` pins the cluster population independently of the sample
    draws; pass the training seed here to build a held-out set from the same
    population.
    """
    if K < 1:
        raise ValueError("need at least one device")
    if classes_per_device not in (1, 2):
        raise ValueError("classes_per_device must be 1 or 2")
    rng = np.random.default_rng(seed)
    if center_seed is None:
        centers = rng.normal(0.0, CLUSTER_CENTER_SCALE, size=(NUM_CLUSTERS, feature_dim))
    else:
        centers = np.random.default_rng(center_seed).normal(
            0.0, CLUSTER_CENTER_SCALE, size=(NUM_CLUSTERS, feature_dim)
        )
    fleet = []
    for k in range(K):
        clusters = [k % NUM_CLUSTERS]
        if classes_per_device == 2:
            other = int(rng.integers(NUM_CLUSTERS - 1))
            if other >= clusters[0]:
                other += 1
            clusters.append(other)
        size = int(np.clip(round(size_scale * rng.lognormal(0.0, size_sigma)), min_size, max_size))
        which = rng.integers(len(clusters), size=size)
        assignments = np.asarray(clusters)[which]
        features = centers[assignments] + rng.normal(0.0, CLUSTER_STD, size=(size, feature_dim))
        labels = (assignments == POSITIVE_CLUSTER).astype(np.int8)
        fleet.append(LocalDataset(features, labels))
    return fleet


def fleet_weights(fleet: Sequence[LocalDataset]) -> np.ndarray:
    """Aggregation weights proportional to dataset sizes, summing to one."""
    sizes = np.array([ds.count for ds in fleet], dtype=np.float64)
    return sizes / sizes.sum()


def _design(ds: LocalDataset) -> tuple[np.ndarray, np.ndarray]:
    """Intercept-augmented design matrix and +-1 labels."""
    X = np.hstack([ds.features, np.ones((ds.count, 1))])
    y = 2.0 * ds.labels.astype(np.float64) - 1.0
    return X, y


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def local_loss(w: np.ndarray, ds: LocalDataset, lc: LearningConstants) -> float:
    """Average regularized logistic loss of one device."""
    w = np.asarray(w, dtype=np.float64)
    if w.size != ds.model_dim:
        raise ValueError(f"model has dim {w.size}, dataset expects {ds.model_dim}")
    X, y = _design(ds)
    margins = y * (X @ w)
    reg = 0.5 * lc.strong_convexity * float(w @ w)
    return float(np.mean(np.logaddexp(0.0, -margins))) + reg


def _raw_gradient(w: np.ndarray, ds: LocalDataset, reg: float) -> np.ndarray:
    """Exact gradient of the regularized local loss (no clipping)."""
    X, y = _design(ds)
    s = _sigmoid(-y * (X @ w))
    return -(y * s) @ X / ds.count + reg * w


def _per_sample_gradients(w: np.ndarray, ds: LocalDataset, reg: float) -> np.ndarray:
    X, y = _design(ds)
    s = _sigmoid(-y * (X @ w))
    return -(y * s)[:, None] * X + reg * w[None, :]


def local_gradient(w: np.ndarray, ds: LocalDataset, lc: LearningConstants) -> np.ndarray:
    """Average of per-sample gradients, each norm-clipped to the gradient bound.

    The clipped average inherits the bound, so every emitted update has norm
    at most ``lc.grad_bound``.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.size != ds.model_dim:
        raise ValueError(f"model has dim {w.size}, dataset expects {ds.model_dim}")
    G = _per_sample_gradients(w, ds, lc.strong_convexity)
    norms = np.linalg.norm(G, axis=1)
    over = norms > lc.grad_bound
    if np.any(over):
        G = G.copy()
        G[over] *= (lc.grad_bound / norms[over])[:, None]
    return G.mean(axis=0)


def global_gradient(grads: Sequence[np.ndarray], weights: Sequence[float]) -> np.ndarray:
    """Exact weighted sum of local gradients."""
    weights = np.asarray(weights, dtype=np.float64)
    if len(grads) != weights.size:
        raise ValueError("one weight per gradient required")
    if abs(float(weights.sum()) - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1, got {weights.sum()!r}")
    out = np.zeros_like(np.asarray(grads[0], dtype=np.float64))
    for g, a in zip(grads, weights):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != out.shape:
            raise ValueError("gradient dimensions disagree")
        out += a * g
    return out


def gd_step(w: np.ndarray, g: np.ndarray, eta: float) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if w.shape != g.shape:
        raise ValueError("model and gradient dimensions disagree")
    return w - eta * g


def global_loss(
    w: np.ndarray,
    fleet: Sequence[LocalDataset],
    weights: Sequence[float],
    lc: LearningConstants,
) -> float:
    """Weighted sum of local losses."""
    weights = np.asarray(weights, dtype=np.float64)
    if len(fleet) != weights.size:
        raise ValueError("one weight per dataset required")
    return float(sum(a * local_loss(w, ds, lc) for ds, a in zip(fleet, weights)))


def _smoothness_bound(ds: LocalDataset, reg: float) -> float:
    """Exact gradient-Lipschitz bound: reg + largest design eigenvalue / 4."""
    X, _ = _design(ds)
    return reg + 0.25 * float(np.linalg.eigvalsh((X.T @ X) / ds.count)[-1])


def _descend(grad_fn, loss_fn, dim: int, tol: float, max_iter: int, lipschitz: float) -> np.ndarray:
    """Gradient descent with Armijo backtracking until the gradient is small.

    Once the Armijo decrease target drops below float resolution of the loss,
    the search switches to a fixed step of 1/lipschitz; for a smooth strongly
    convex objective that phase contracts the gradient norm all the way to
    machine precision without needing resolvable loss comparisons.
    """
    w = np.zeros(dim)
    loss = loss_fn(w)
    step = 1.0
    for _ in range(max_iter):
        g = grad_fn(w)
        gnorm_sq = float(g @ g)
        if math.sqrt(gnorm_sq) <= tol:
            return w
        if 1e-4 * gnorm_sq / lipschitz <= 8e-16 * abs(loss):
            w = w - g / lipschitz
            loss = loss_fn(w)
            continue
        step = min(step * 2.0, 1e6)
        while True:
            cand = w - step * g
            cand_loss = loss_fn(cand)
            if cand_loss <= loss - 1e-4 * step * gnorm_sq:
                break
            step *= 0.5
            if step * gnorm_sq < 8e-16 * abs(loss):
                cand, cand_loss = w - g / lipschitz, loss_fn(w - g / lipschitz)
                break
        w, loss = cand, cand_loss
    raise ConvergenceError(f"gradient descent did not reach tol={tol} in {max_iter} steps")


def solve_local_optimum(
    ds: LocalDataset, lc: LearningConstants, tol: float, max_iter: int = 100_000
) -> np.ndarray:
    """Minimize one device's regularized loss to gradient norm ``tol``.

    Uses the exact gradient of the smooth objective (no clipping), since the
    optimum is defined by the objective itself.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    reg = lc.strong_convexity
    return _descend(
        lambda w: _raw_gradient(w, ds, reg),
        lambda w: local_loss(w, ds, lc),
        ds.model_dim,
        tol,
        max_iter,
        _smoothness_bound(ds, reg),
    )


def solve_global_optimum(
    fleet: Sequence[LocalDataset],
    weights: Sequence[float],
    lc: LearningConstants,
    tol: float,
    max_iter: int = 100_000,
) -> np.ndarray:
    """Centralized high-accuracy solve of the weighted global objective."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    weights = np.asarray(weights, dtype=np.float64)
    reg = lc.strong_convexity

    def grad(w):
        out = np.zeros_like(w)
        for ds, a in zip(fleet, weights):
            out += a * _raw_gradient(w, ds, reg)
        return out

    lip = max(_smoothness_bound(ds, reg) for ds in fleet)
    return _descend(
        grad,
        lambda w: global_loss(w, fleet, weights, lc),
        fleet[0].model_dim,
        tol,
        max_iter,
        lip,
    )


def estimate_constants(
    fleet: Sequence[LocalDataset],
    probe_models: int,
    seed: int,
    *,
    reg: float = DEFAULT_REG,
    solver_tol: float = 1e-9,
) -> LearningConstants:
    """Measure the curvature and heterogeneity constants of a fleet.

    The strong-convexity constant is the regularization coefficient itself.
    Smoothness adds the worst per-device quarter of the largest eigenvalue of
    the design second-moment matrix.  The gradient bound and quantizer range
    bound come from probing random models inside a ball of radius 10 around
    the origin, each padded by a 1.1 safety margin.  The local-global
    distance is measured from high-accuracy solves.
    """
    if probe_models < 1:
        raise ValueError("need at least one probe model")
    if not fleet:
        raise ValueError("fleet is empty")
    dim = fleet[0].model_dim
    rng = np.random.default_rng(seed)

    lip = 0.0
    for ds in fleet:
        X, _ = _design(ds)
        second_moment = (X.T @ X) / ds.count
        lip = max(lip, float(np.linalg.eigvalsh(second_moment)[-1]))
    smooth = reg + 0.25 * lip

    grad_max = 0.0
    range_sq = 0.0
    for _ in range(probe_models):
        direction = rng.normal(size=dim)
        direction /= np.linalg.norm(direction)
        radius = PROBE_RADIUS * rng.random() ** (1.0 / dim)
        w = radius * direction
        for ds in fleet:
            G = _per_sample_gradients(w, ds, reg)
            grad_max = max(grad_max, float(np.linalg.norm(G, axis=1).max()))
            g = G.mean(axis=0)
            mags = np.abs(g)
            span = float(mags.max() - mags.min())
            range_sq = max(range_sq, 0.25 * dim * span * span)

    probe_lc = LearningConstants(
        strong_convexity=reg,
        smoothness=smooth,
        grad_bound=max(grad_max, 1e-12),
        local_global_distance=0.0,
        quant_range_sq=max(range_sq, 1e-12),
    )
    weights = fleet_weights(fleet)
    w_star = solve_global_optimum(fleet, weights, probe_lc, solver_tol)
    delta = 0.0
    for ds in fleet:
        w_k = solve_local_optimum(ds, probe_lc, solver_tol)
        delta = max(delta, float(np.linalg.norm(w_k - w_star)))

    return LearningConstants(
        strong_convexity=reg,
        smoothness=smooth,
        grad_bound=PROBE_MARGIN * max(grad_max, 1e-12),
        local_global_distance=delta,
        quant_range_sq=PROBE_MARGIN * max(range_sq, 1e-12),
    )


def accuracy(w: np.ndarray, ds: LocalDataset) -> float:
    """Fraction of samples whose sign prediction matches the label."""
    X, y = _design(ds)
    return float(np.mean(np.sign(X @ w) * y > 0))


def pooled_dataset(fleet: Sequence[LocalDataset]) -> LocalDataset:
    """Concatenate a fleet into one dataset (for held-out evaluation)."""
    return LocalDataset(
        np.vstack([ds.features for ds in fleet]),
        np.concatenate([ds.labels for ds in fleet]),
    )


def save_fleet(path, fleet: Sequence[LocalDataset]) -> None:
    """Dump a fleet to a line-oriented text file, round-trippable exactly."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, ds in enumerate(fleet):
            fh.write(f"device {i} count {ds.count} dim {ds.feature_dim}\n")
            for row, label in zip(ds.features, ds.labels):
                cells = " ".join(repr(float(v)) for v in row)
                fh.write(f"{int(label)} {cells}\n")


def load_fleet(path) -> list[LocalDataset]:
    fleet = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    pos = 0
    while pos < len(lines):
        header = lines[pos].split()
        if header[0] != "device":
            raise ValueError(f"expected device header, got {lines[pos]!r}")
        count, dim = int(header[3]), int(header[5])
        feats = np.empty((count, dim))
        labels = np.empty(count, dtype=np.int8)
        for j in range(count):
            cells = lines[pos + 1 + j].split()
            labels[j] = int(cells[0])
            feats[j] = [float(c) for c in cells[1:]]
        fleet.append(LocalDataset(feats, labels))
        pos += 1 + count
    return fleet

