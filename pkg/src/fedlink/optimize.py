"""Device-sampling optimizers plus the discrete bit-width and truncation
threshold searches.

The digital sampling problem has a water-filling KKT solution found by
bisection on the multiplier.  The analog problem is a convex-concave ratio,
solved by Dinkelbach iteration; each convex subproblem is handled with an
epigraph variable on the max term, an exact water-filling inner solve for
the separable part, and a golden-section search over the epigraph variable.
That pipeline meets the accuracy the grid-search oracles demand without an
external solver dependency.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Sequence

import numpy as np

from . import bounds
from .core import EPS_R, DeviceProfile, LearningConstants, SystemConfig
from .formulas import distortion_constant

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class InfeasibleSamplingError(ValueError):
    """No inclusion-probability vector can satisfy the constraints."""


@dataclasses.dataclass(frozen=True, eq=False)
class OptimizerResult:
    """Solution vector, objective value, and per-iteration diagnostics."""

    probs: np.ndarray
    objective: float
    iterations: int
    converged: bool
    trace: tuple[float, ...]


def _exact_sum_polish(r: np.ndarray, n: int) -> np.ndarray:
    """Rescale non-saturated coordinates so the probabilities sum exactly to n."""
    r = r.copy()
    for _ in range(len(r) + 1):
        free = (r < 1.0 - 1e-15) & (r > EPS_R * (1.0 + 1e-12))
        residual = n - float(r[~free].sum())
        if not np.any(free):
            break
        scale = residual / float(r[free].sum())
        r[free] *= scale
        if np.all(r <= 1.0 + 1e-15):
            r = np.minimum(r, 1.0)
            break
        r = np.clip(r, EPS_R, 1.0)
    return np.clip(r, EPS_R, 1.0)


def optimize_inclusion_digital(
    alpha, p, N: int, tol: float = 1e-12
) -> OptimizerResult:
    """Minimize the digital virtual sum weight over inclusion probabilities.

    KKT structure: r_k = min(sqrt(alpha_k / (nu * p_k)), 1) with the
    multiplier nu found by bisection until the probabilities sum to N.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if alpha.size != p.size:
        raise ValueError("alpha and p must have matching lengths")
    if np.any(alpha <= 0.0) or np.any(p <= 0.0) or np.any(p > 1.0):
        raise ValueError("alpha must be positive and p must lie in (0, 1]")
    if not tol > 0.0:
        raise ValueError("tol must be positive")
    K = alpha.size
    if N > K or N < 1:
        raise InfeasibleSamplingError(f"cannot pick {N} of {K} devices")

    if N == K:
        r = np.ones(K)
        g = bounds.virtual_weight_digital(alpha, r, p)
        return OptimizerResult(r, g, 0, True, (g,))

    ratio = alpha / p

    def r_of(nu: float) -> np.ndarray:
        return np.clip(np.sqrt(ratio / nu), EPS_R, 1.0)

    # Bracket the multiplier: total inclusion decreases monotonically in nu.
    amount = float(np.sum(np.sqrt(ratio)))
    nu_hi = (amount / N) ** 2 * 4.0
    while float(r_of(nu_hi).sum()) > N:
        nu_hi *= 4.0
    nu_lo = nu_hi / 4.0
    while float(r_of(nu_lo).sum()) < N:
        nu_lo /= 4.0

    trace = []
    iterations = 0
    converged = False
    for iterations in range(1, 201):
        nu = 0.5 * (nu_lo + nu_hi)
        r = r_of(nu)
        total = float(r.sum())
        trace.append(bounds.virtual_weight_digital(alpha, r, p))
        if abs(total - N) <= min(tol, 1e-12):
            converged = True
            break
        if total > N:
            nu_lo = nu
        else:
            nu_hi = nu
        if (nu_hi - nu_lo) <= 1e-16 * nu_hi:
            converged = True
            break

    r = _exact_sum_polish(r, N)
    g = bounds.virtual_weight_digital(alpha, r, p)
    return OptimizerResult(r, g, iterations, converged or abs(r.sum() - N) <= tol, tuple(trace))


def _waterfill(coeff: np.ndarray, n: float, lb: np.ndarray, ub: np.ndarray) -> np.ndarray:
    """Minimize sum(coeff / r) subject to sum(r) = n and lb <= r <= ub.

    Coefficients may be zero; those coordinates only soak up whatever mass
    the positive ones do not want.
    """
    lb = np.asarray(lb, dtype=np.float64)
    ub = np.asarray(ub, dtype=np.float64)
    if float(lb.sum()) > n + 1e-9 or float(ub.sum()) < n - 1e-9:
        raise InfeasibleSamplingError("box constraints cannot meet the sum target")

    coeff = np.asarray(coeff, dtype=np.float64)
    pos = coeff > 0.0
    r = lb.copy()
    budget = n - float(lb[~pos].sum())

    if not np.any(pos):
        # Flat objective: spread the slack proportionally to the box widths.
        slack = n - float(lb.sum())
        widths = ub - lb
        if slack > 0 and float(widths.sum()) > 0:
            r = lb + slack * widths / float(widths.sum())
        return np.clip(r, lb, ub)

    def r_pos(nu: float) -> np.ndarray:
        return np.clip(np.sqrt(coeff[pos] / nu), lb[pos], ub[pos])

    hi_total = float(ub[pos].sum())
    if hi_total <= budget:
        # Positive part saturates; park the leftovers on the flat coordinates.
        r[pos] = ub[pos]
        slack = n - float(r.sum())
        widths = (ub - r) * ~pos
        if slack > 1e-15:
            if float(widths.sum()) <= 0:
                raise InfeasibleSamplingError("box constraints cannot meet the sum target")
            r += slack * widths / float(widths.sum())
        return np.clip(r, lb, ub)

    nu_hi = (float(np.sum(np.sqrt(coeff[pos]))) / max(budget, 1e-300)) ** 2 * 4.0
    while float(r_pos(nu_hi).sum()) > budget:
        nu_hi *= 4.0
    nu_lo = nu_hi
    while float(r_pos(nu_lo).sum()) < budget:
        nu_lo /= 4.0
    for _ in range(200):
        nu = 0.5 * (nu_lo + nu_hi)
        total = float(r_pos(nu).sum())
        if abs(total - budget) <= 1e-13 * max(1.0, budget):
            break
        if total > budget:
            nu_lo = nu
        else:
            nu_hi = nu
        if (nu_hi - nu_lo) <= 1e-16 * nu_hi:
            break
    r[pos] = r_pos(nu)
    return np.clip(r, lb, ub)


def solve_dinkelbach_subproblem(
    alpha,
    dist_gain,
    c_const: float,
    weight: float,
    N: int,
    *,
    floor: float = EPS_R,
    tol: float = 1e-12,
) -> np.ndarray:
    """Minimize weight * c * sum(alpha/r) + max_k(alpha_k^2 dist_gain_k / r_k^2)
    over the box-constrained simplex slice {sum r = N, floor <= r <= 1}.

    ``dist_gain`` carries the per-device large-scale channel attenuation
    (distance to the pathloss power); the caller folds any scalar prefactor
    of the max term into ``weight``.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    dist_gain = np.asarray(dist_gain, dtype=np.float64) * np.ones_like(alpha)
    if np.any(alpha <= 0.0) or np.any(dist_gain < 0.0):
        raise ValueError("alpha must be positive and dist_gain nonnegative")
    if weight < 0.0:
        raise ValueError("weight cannot be negative")
    K = alpha.size
    if N > K or N < 1:
        raise InfeasibleSamplingError(f"cannot pick {N} of {K} devices")

    lb0 = np.full(K, floor)
    ub = np.ones(K)
    lin = weight * c_const * alpha
    u = alpha**2 * dist_gain

    if float(u.max()) == 0.0:
        r = _waterfill(lin, N, lb0, ub)
        return _exact_sum_polish(r, N)

    def lower_bounds(t: float) -> np.ndarray:
        return np.maximum(lb0, np.sqrt(u / t))

    # Smallest epigraph value keeping every lower bound feasible.
    t_lo = float(u.max())  # ensures lb <= 1
    if float(lower_bounds(t_lo).sum()) > N:
        t_hi_probe = t_lo
        while float(lower_bounds(t_hi_probe).sum()) > N:
            t_hi_probe *= 4.0
        lo, hi = t_lo, t_hi_probe
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if float(lower_bounds(mid).sum()) > N:
                lo = mid
            else:
                hi = mid
            if (hi - lo) <= 1e-15 * hi:
                break
        t_lo = hi

    def inner(t: float) -> tuple[np.ndarray, float]:
        r = _waterfill(lin, N, lower_bounds(t), ub)
        return r, float(np.sum(lin / r))

    # Beyond the epigraph value of the unconstrained solution the lower
    # bounds go slack, so the optimum lies below it.
    r_unc = _waterfill(lin, N, lb0, ub)
    t_hi = max(float(np.max(u / r_unc**2)), t_lo * (1.0 + 1e-12))

    def total(t: float) -> float:
        return t + inner(t)[1]

    a, b = t_lo, t_hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = total(x1), total(x2)
    for _ in range(300):
        if (b - a) <= tol * max(1.0, b):
            break
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = total(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = total(x2)
    t_star = 0.5 * (a + b)
    r = inner(t_star)[0]
    return _exact_sum_polish(r, N)


def dinkelbach_analog(
    cfg: SystemConfig,
    fleet: Sequence[DeviceProfile],
    lc: LearningConstants,
    N: int,
    tol: float = 1e-10,
    max_iter: int = 60,
) -> OptimizerResult:
    """Minimize the analog stationary-gap ratio over inclusion probabilities.

    Classic Dinkelbach iteration: each step solves the convex subproblem with
    the current ratio estimate as a penalty weight, then re-evaluates the
    ratio.  The ratio trace is monotone nonincreasing and converges to the
    global optimum of the fractional program.
    """
    alpha, _, dists = bounds.fleet_arrays(fleet)
    K = alpha.size
    if N > K or N < 1:
        raise InfeasibleSamplingError(f"cannot pick {N} of {K} devices")
    c = distortion_constant(cfg.csi_correlation, cfg.trunc_threshold)
    kappa = bounds.noise_prefactor(cfg, lc, cfg.power_mode)
    gain = dists**cfg.pathloss_exponent
    mu, L, delta = lc.strong_convexity, lc.smoothness, lc.local_global_distance
    eta = cfg.learning_rate

    def g_analog(r: np.ndarray) -> float:
        return float(c * np.sum(alpha / r) - 1.0)

    def phi(r: np.ndarray) -> float:
        return float(kappa * np.max(alpha**2 * gain / r**2))

    def ratio(r: np.ndarray) -> float:
        g = g_analog(r)
        denom = 2.0 * mu - 4.0 * eta * L**2 * g
        if not denom > 0.0:
            raise bounds.InfeasibleLearningRateError(
                f"learning rate {eta!r} infeasible at virtual weight {g!r}"
            )
        return (phi(r) + 2.0 * L**2 * delta**2 * g) / denom

    r = np.full(K, N / K)
    value = ratio(r)
    trace = [value]
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        penalty = 2.0 * L**2 * delta**2 + 4.0 * eta * L**2 * value
        if kappa > 0.0:
            r = solve_dinkelbach_subproblem(alpha, gain, c, penalty / kappa, N)
        else:
            r = solve_dinkelbach_subproblem(alpha, np.zeros(K), c, penalty, N)
        new_value = ratio(r)
        trace.append(new_value)
        if abs(new_value - value) <= tol:
            value = new_value
            converged = True
            break
        value = new_value
    return OptimizerResult(r, value, iterations, converged, tuple(trace))


def search_quantization_bits(
    cfg: SystemConfig, fleet: Sequence[DeviceProfile], lc: LearningConstants, b_max: int
) -> int:
    """Exhaustive argmin of the digital gap over bit widths 1..b_max.

    Ties break toward fewer bits; raises if every width violates the
    learning-rate condition.
    """
    if b_max < 1:
        raise ValueError("b_max must be at least 1")
    table = bounds.gap_digital_vs_bits(cfg, fleet, lc, range(1, b_max + 1))
    best_b, best_gap = None, math.inf
    for b, gap in table:
        if gap < best_gap:
            best_b, best_gap = b, gap
    if best_b is None or math.isinf(best_gap):
        raise bounds.InfeasibleLearningRateError(
            "every quantization width violates the learning-rate condition"
        )
    return best_b


def search_truncation_threshold(
    cfg: SystemConfig,
    fleet: Sequence[DeviceProfile],
    lc: LearningConstants,
    grid: Sequence[float],
) -> float:
    """Grid argmin of the analog gap over truncation thresholds.

    Ties break toward the smaller threshold; infeasible points contribute
    math.inf.
    """
    if len(grid) == 0:
        raise ValueError("threshold grid is empty")
    values = sorted(float(g) for g in grid)
    if values[0] <= 0.0:
        raise ValueError("thresholds must be positive")
    alpha, r, dists = bounds.fleet_arrays(fleet)
    best_g, best_gap = None, math.inf
    for g_th in values:
        cfg_g = dataclasses.replace(cfg, trunc_threshold=g_th)
        g_a = bounds.virtual_weight_analog(alpha, r, cfg.csi_correlation, g_th)
        phi = bounds.noise_term(cfg_g, alpha, r, dists, lc, cfg.power_mode)
        try:
            gap = bounds.gap_analog(lc, cfg.learning_rate, g_a, phi)
        except bounds.InfeasibleLearningRateError:
            gap = math.inf
        if gap < best_gap:
            best_g, best_gap = g_th, gap
    if best_g is None or math.isinf(best_gap):
        raise bounds.InfeasibleLearningRateError(
            "every truncation threshold violates the learning-rate condition"
        )
    return best_g
