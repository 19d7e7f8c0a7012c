"""Closed-form convergence quantities: virtual sum weights, noise terms,
stationary optimality gaps, geometric convergence envelopes, and their
high-power limits.

Formulas are evaluated exactly as stated analytically.  In particular the
analog noise term here carries no model-dimension factor, while the channel
simulator's physical noise energy does; reports expose the factor so the two
can be cross-read (see the channel module docstring).
"""

from __future__ import annotations

import dataclasses
import math
from typing import Sequence

import numpy as np

from . import channel
from .core import EPS_R, DeviceProfile, LearningConstants, PowerMode, SystemConfig
from .formulas import distortion_constant, exp_integral_e1
from .quantize import quantizer_variance_bound


class InfeasibleLearningRateError(ValueError):
    """The learning rate violates the stability condition for this weight."""


class NonContractiveError(ValueError):
    """The per-round contraction factor is not inside [0, 1)."""


def _positive_unit_vector(name: str, v) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if np.any(arr <= 0.0) or np.any(arr > 1.0):
        raise ValueError(f"every entry of {name} must lie in (0, 1]")
    return arr


def virtual_weight_digital(alpha, r, p) -> float:
    """Sum of alpha / (p * r): one in the ideal full-participation case."""
    alpha = np.asarray(alpha, dtype=np.float64)
    r = _positive_unit_vector("r", r)
    p = _positive_unit_vector("p", p)
    if not alpha.size == r.size == p.size:
        raise ValueError("alpha, r, p must have matching lengths")
    return float(np.sum(alpha / (p * np.maximum(r, EPS_R))))


def virtual_weight_analog(alpha, r, rho: float, gamma_th: float) -> float:
    """Distortion-weighted inclusion sum minus one (zero in the ideal limit)."""
    alpha = np.asarray(alpha, dtype=np.float64)
    r = _positive_unit_vector("r", r)
    c = distortion_constant(rho, gamma_th)
    return float(c * np.sum(alpha / np.maximum(r, EPS_R)) - 1.0)


def noise_prefactor(cfg: SystemConfig, lc: LearningConstants, mode: PowerMode) -> float:
    """Scalar multiplying max_k(alpha_k^2 d_k^a / r_k^2) in the noise term."""
    g = cfg.trunc_threshold
    rho = cfg.csi_correlation
    base = (
        cfg.bandwidth_hz
        * cfg.noise_density_w_per_hz
        * lc.grad_bound**2
        * math.exp(2.0 * g)
        / (2.0 * cfg.power_budget_w * rho**2)
    )
    if mode is PowerMode.MAX:
        return base / g
    return base * exp_integral_e1(g)


def noise_term(
    cfg: SystemConfig,
    alpha,
    r,
    dists,
    lc: LearningConstants,
    mode: PowerMode | None = None,
) -> float:
    """Equivalent received-noise contribution to the analog bound."""
    mode = cfg.power_mode if mode is None else mode
    alpha = np.asarray(alpha, dtype=np.float64)
    r = np.maximum(np.asarray(r, dtype=np.float64), EPS_R)
    dists = np.asarray(dists, dtype=np.float64)
    worst = float(np.max(alpha**2 * dists**cfg.pathloss_exponent / r**2))
    return noise_prefactor(cfg, lc, mode) * worst


def stationary_gap(lc: LearningConstants, eta: float, g: float, const_term: float) -> float:
    """Long-run gap eta * L * const / (2 mu - 4 eta L^2 g); requires stability."""
    denom = 2.0 * lc.strong_convexity - 4.0 * eta * lc.smoothness**2 * g
    if not denom > 0.0:
        raise InfeasibleLearningRateError(
            f"learning rate {eta!r} is too large for virtual weight {g!r}"
        )
    return eta * lc.smoothness * const_term / denom


def digital_const_term(lc: LearningConstants, phi_b: float, g_d: float) -> float:
    """Variance constant of the digital distance recursion."""
    return (phi_b + 2.0 * lc.smoothness**2 * lc.local_global_distance**2) * g_d


def analog_const_term(lc: LearningConstants, phi_term: float, g_a: float) -> float:
    """Variance constant of the analog distance recursion."""
    return phi_term + 2.0 * lc.smoothness**2 * lc.local_global_distance**2 * g_a


def gap_digital(lc: LearningConstants, eta: float, g_d: float, phi_b: float) -> float:
    """Stationary optimality gap of the digital scheme."""
    return stationary_gap(lc, eta, g_d, digital_const_term(lc, phi_b, g_d))


def gap_analog(lc: LearningConstants, eta: float, g_a: float, phi_term: float) -> float:
    """Stationary optimality gap of the analog scheme (either power mode)."""
    return stationary_gap(lc, eta, g_a, analog_const_term(lc, phi_term, g_a))


def gap_digital_highsnr(
    lc: LearningConstants, eta: float, alpha, r, phi_b: float
) -> float:
    """Limit of the digital gap as every delivery succeeds (p -> 1)."""
    alpha = np.asarray(alpha, dtype=np.float64)
    g = virtual_weight_digital(alpha, r, np.ones_like(alpha))
    return gap_digital(lc, eta, g, phi_b)


def gap_analog_highsnr(lc: LearningConstants, eta: float, g_a: float) -> float:
    """Limit of the analog gap as the noise term vanishes (P -> infinity)."""
    return gap_analog(lc, eta, g_a, 0.0)


def convergence_curve(
    lc: LearningConstants,
    eta: float,
    g: float,
    const_term: float,
    m_max: int,
    init_dist_sq: float,
) -> np.ndarray:
    """Geometric envelope on the expected optimality gap, round by round.

    Entry m bounds the gap after m+1 updates:
    (L/2) * rho_c^(m+1) * init_dist_sq + stationary gap, with contraction
    rho_c = 1 - eta*mu + 2 eta^2 L^2 g.
    """
    rho_c = (
        1.0
        - eta * lc.strong_convexity
        + 2.0 * eta**2 * lc.smoothness**2 * g
    )
    if not 0.0 <= rho_c < 1.0:
        raise NonContractiveError(f"contraction factor {rho_c!r} is not in [0, 1)")
    gap = stationary_gap(lc, eta, g, const_term)
    powers = rho_c ** np.arange(1, m_max + 2)
    return 0.5 * lc.smoothness * powers * init_dist_sq + gap


def fleet_arrays(fleet: Sequence[DeviceProfile]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(weights, inclusion probabilities, distances) as arrays."""
    alpha = np.array([dev.weight for dev in fleet])
    r = np.array([dev.inclusion_prob for dev in fleet])
    dists = np.array([dev.distance_m for dev in fleet])
    return alpha, r, dists


def success_probabilities(cfg: SystemConfig, fleet: Sequence[DeviceProfile]) -> np.ndarray:
    """Per-device delivery probabilities at the configured rate and power."""
    theta = channel.min_rate_param(cfg)
    return np.array(
        [channel.success_probability(cfg, dev, theta, cfg.power_budget_w) for dev in fleet]
    )


def gap_digital_vs_bits(
    cfg: SystemConfig,
    fleet: Sequence[DeviceProfile],
    lc: LearningConstants,
    b_range: Sequence[int],
) -> list[tuple[int, float]]:
    """Stationary digital gap across bit widths, re-deriving the rate threshold.

    Raising b shrinks the quantization error but forces a higher transmission
    rate and therefore more outages; infeasible widths yield math.inf.
    """
    if len(b_range) == 0:
        raise ValueError("bit range is empty")
    alpha, r, _ = fleet_arrays(fleet)
    out = []
    for b in b_range:
        cfg_b = dataclasses.replace(cfg, quant_bits=int(b))
        p = success_probabilities(cfg_b, fleet)
        phi_b = quantizer_variance_bound(lc.quant_range_sq, int(b))
        if np.any(p <= 0.0):
            out.append((int(b), math.inf))
            continue
        g_d = virtual_weight_digital(alpha, r, p)
        try:
            gap = gap_digital(lc, cfg.learning_rate, g_d, phi_b)
        except InfeasibleLearningRateError:
            gap = math.inf
        out.append((int(b), gap))
    return out


@dataclasses.dataclass(frozen=True)
class BoundReport:
    """Every closed-form quantity for one configuration.

    ``noise_dim_factor`` is the model dimension: multiplying ``phi_max`` or
    ``phi_ave`` by it gives the simulator's physical per-round noise energy.
    """

    g_digital: float
    g_analog: float
    phi_quant: float
    phi_max: float
    phi_ave: float
    gap_digital: float
    gap_analog: float
    gap_analog_ave: float
    gap_digital_inf: float
    gap_analog_inf: float
    lr_feasible_digital: bool
    lr_feasible_analog: bool
    noise_dim_factor: int


def build_bound_report(
    cfg: SystemConfig, fleet: Sequence[DeviceProfile], lc: LearningConstants
) -> BoundReport:
    """Evaluate every bound quantity for a configuration and fleet."""
    alpha, r, dists = fleet_arrays(fleet)
    eta = cfg.learning_rate
    p = success_probabilities(cfg, fleet)

    g_d = (
        virtual_weight_digital(alpha, r, p) if np.all(p > 0.0) else math.inf
    )
    g_a = virtual_weight_analog(alpha, r, cfg.csi_correlation, cfg.trunc_threshold)
    phi_quant = quantizer_variance_bound(lc.quant_range_sq, cfg.quant_bits)
    phi_max = noise_term(cfg, alpha, r, dists, lc, PowerMode.MAX)
    phi_ave = noise_term(cfg, alpha, r, dists, lc, PowerMode.AVERAGE)

    def _try(fn, *args):
        try:
            return fn(lc, eta, *args), True
        except InfeasibleLearningRateError:
            return math.inf, False

    if math.isinf(g_d):
        gd_val, gd_ok = math.inf, False
    else:
        gd_val, gd_ok = _try(gap_digital, g_d, phi_quant)
    ga_val, ga_ok = _try(gap_analog, g_a, phi_max)
    ga_ave_val, _ = _try(gap_analog, g_a, phi_ave)
    gd_inf, _ = _try(gap_digital_highsnr, alpha, r, phi_quant)
    ga_inf, _ = _try(gap_analog_highsnr, g_a)

    return BoundReport(
        g_digital=g_d,
        g_analog=g_a,
        phi_quant=phi_quant,
        phi_max=phi_max,
        phi_ave=phi_ave,
        gap_digital=gd_val,
        gap_analog=ga_val,
        gap_analog_ave=ga_ave_val,
        gap_digital_inf=gd_inf,
        gap_analog_inf=ga_inf,
        lr_feasible_digital=gd_ok,
        lr_feasible_analog=ga_ok,
        noise_dim_factor=cfg.model_dim,
    )
