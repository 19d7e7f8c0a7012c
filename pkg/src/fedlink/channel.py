"""Rayleigh fading with imperfect CSI and the per-round uplink estimators.

Block fading: small-scale coefficients are redrawn each round and held fixed
within it, while the large-scale gain d^(-a/2) is deterministic per device.
The digital path quantizes updates and drops packets at the closed-form
outage probability; the analog path superposes truncated-channel-inversion
signals plus receiver noise.

One deliberate physical detail: the receiver noise is a d-dimensional
complex vector with per-component variance B*N0, so the simulated noise
energy carries a factor of the model dimension that the closed-form bound
module's noise term does not include.  The simulator stays faithful to the
physics; the bound evaluator implements the analytical expression verbatim
and surfaces the dimension factor in its reports.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Iterable, Sequence

import numpy as np

from . import formulas, learn
from .core import EPS_R, DeviceProfile, LearningConstants, PowerMode, Scheme, SystemConfig
from .quantize import decode, quantize_vector


@dataclasses.dataclass(frozen=True, eq=False)
class ChannelDraw:
    """True and estimated small-scale fading for one device in one round."""

    true_fading: complex
    est_fading: complex


@dataclasses.dataclass(frozen=True, eq=False)
class GradientEstimate:
    """One round's aggregated update plus per-device outcome flags."""

    vector: np.ndarray
    scheme: Scheme
    participated: np.ndarray
    delivered: np.ndarray
    round_delay_s: float

    def __post_init__(self):
        if np.any(self.delivered & ~self.participated):
            raise ValueError("a device cannot deliver without participating")


def draw_channels(K: int, rho: float, rng: np.random.Generator) -> list[ChannelDraw]:
    """Correlated (true, estimated) Rayleigh pairs: h = rho*h_est + sqrt(1-rho^2)*v."""
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"csi correlation must lie in (0, 1], got {rho}")
    est = (rng.standard_normal(K) + 1j * rng.standard_normal(K)) / math.sqrt(2.0)
    err = (rng.standard_normal(K) + 1j * rng.standard_normal(K)) / math.sqrt(2.0)
    true = rho * est + math.sqrt(1.0 - rho * rho) * err
    return [ChannelDraw(complex(h), complex(hh)) for h, hh in zip(true, est)]


def min_rate_param(cfg: SystemConfig) -> float:
    """Smallest rate threshold meeting the delay target (see formulas module)."""
    return formulas.min_rate_threshold(
        cfg.participants_per_round,
        cfg.model_dim,
        cfg.quant_bits,
        cfg.bandwidth_hz,
        cfg.delay_target_s,
    )


def success_probability(
    cfg: SystemConfig, dev: DeviceProfile, theta: float, power_w: float
) -> float:
    """Per-packet delivery probability for one device at one power level."""
    return formulas.packet_success_probability(
        cfg.bandwidth_hz,
        cfg.noise_density_w_per_hz,
        theta,
        cfg.participants_per_round,
        power_w,
        dev.distance_m,
        cfg.pathloss_exponent,
    )


def compensation_lambda(rho: float, gamma_th: float) -> float:
    """Coefficient exp(g)/rho that makes the analog distortion mean one."""
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"csi correlation must lie in (0, 1], got {rho}")
    if not gamma_th > 0.0:
        raise ValueError(f"truncation threshold must be positive, got {gamma_th}")
    return math.exp(gamma_th) / rho


def scaling_factor(
    cfg: SystemConfig, fleet: Sequence[DeviceProfile], lc: LearningConstants
) -> float:
    """Receive scaling that keeps every admissible transmission inside budget.

    Max mode caps the worst admissible draw (channel power at the truncation
    threshold, gradient at its norm bound); average mode caps the expected
    energy over the truncated fading distribution.
    """
    if not cfg.trunc_threshold > 0.0:
        raise ValueError("truncation threshold must be positive")
    gamma_th = cfg.trunc_threshold
    rho = cfg.csi_correlation
    worst = min(
        (max(dev.inclusion_prob, EPS_R) / dev.weight)
        * dev.distance_m ** (-cfg.pathloss_exponent / 2.0)
        for dev in fleet
    )
    if cfg.power_mode is PowerMode.MAX:
        return (
            rho
            * math.sqrt(cfg.power_budget_w * gamma_th)
            / (lc.grad_bound * math.exp(gamma_th))
            * worst
        )
    return (
        rho
        * math.sqrt(cfg.power_budget_w)
        / (lc.grad_bound * math.exp(gamma_th) * math.sqrt(formulas.exp_integral_e1(gamma_th)))
        * worst
    )


def analog_precoder(
    draw: ChannelDraw,
    dev: DeviceProfile,
    lam: float,
    zeta: float,
    gamma_th: float,
    pathloss_exponent: float,
) -> complex:
    """Truncated channel inversion: zero below the threshold, else invert.

    When active, the precoder times the faded channel collapses to the real
    constant zeta * lam * weight / inclusion_prob, which is what lets the
    receiver's single scaling recover the weighted sum.
    """
    if not zeta > 0.0:
        raise ValueError("scaling factor must be positive")
    est = draw.est_fading
    power = abs(est) ** 2
    if power < gamma_th:
        return 0j
    return (
        zeta
        * lam
        * dev.weight
        * dev.distance_m ** (pathloss_exponent / 2.0)
        * est.conjugate()
        / (max(dev.inclusion_prob, EPS_R) * power)
    )


def _check_round_inputs(
    w: np.ndarray,
    fleet: Sequence[DeviceProfile],
    participants: Iterable[int],
    cfg: SystemConfig,
) -> list[int]:
    chosen = sorted(set(int(k) for k in participants))
    if len(chosen) != cfg.participants_per_round:
        raise ValueError(
            f"need exactly {cfg.participants_per_round} distinct participants, "
            f"got {len(chosen)}"
        )
    if chosen and (chosen[0] < 0 or chosen[-1] >= len(fleet)):
        raise ValueError("participant index out of range")
    if np.asarray(w).size != cfg.model_dim:
        raise ValueError("model dimension disagrees with the configuration")
    return chosen


def digital_round(
    w: np.ndarray,
    fleet: Sequence[DeviceProfile],
    participants: Iterable[int],
    cfg: SystemConfig,
    lc: LearningConstants,
    rng: np.random.Generator,
) -> GradientEstimate:
    """One digital uplink round: quantize, transmit at full power, drop outages.

    Each delivered update is reweighted by 1 / (inclusion_prob * success_prob)
    so the aggregate stays unbiased under sampling, quantization, and loss.
    """
    chosen = _check_round_inputs(w, fleet, participants, cfg)
    theta = min_rate_param(cfg)
    K = len(fleet)
    participated = np.zeros(K, dtype=bool)
    delivered = np.zeros(K, dtype=bool)
    est = np.zeros(cfg.model_dim)
    for k in chosen:
        dev = fleet[k]
        participated[k] = True
        g = learn.local_gradient(w, dev.dataset, lc)
        qu = quantize_vector(g, cfg.quant_bits, rng)
        p = success_probability(cfg, dev, theta, cfg.power_budget_w)
        if rng.random() < p:
            delivered[k] = True
            est += dev.weight / (max(dev.inclusion_prob, EPS_R) * p) * decode(qu)
    if math.isfinite(theta):
        rate_log = math.log1p(theta) / math.log(2.0)
    else:
        rate_log = (
            cfg.participants_per_round
            * cfg.model_dim
            * (cfg.quant_bits + 1)
            / (cfg.bandwidth_hz * cfg.delay_target_s)
        )
    delay = (
        cfg.participants_per_round
        * cfg.model_dim
        * (cfg.quant_bits + 1)
        / (cfg.bandwidth_hz * rate_log)
    )
    return GradientEstimate(est, Scheme.DIGITAL, participated, delivered, delay)


def analog_round(
    w: np.ndarray,
    fleet: Sequence[DeviceProfile],
    participants: Iterable[int],
    cfg: SystemConfig,
    lc: LearningConstants,
    rng: np.random.Generator,
) -> GradientEstimate:
    """One over-the-air round: superpose pre-equalized updates plus noise.

    Devices whose estimated channel power falls below the truncation
    threshold stay silent.  The receiver takes the real part and divides by
    the power-control scaling.
    """
    chosen = _check_round_inputs(w, fleet, participants, cfg)
    K = len(fleet)
    lam = compensation_lambda(cfg.csi_correlation, cfg.trunc_threshold)
    zeta = scaling_factor(cfg, fleet, lc)
    draws = draw_channels(K, cfg.csi_correlation, rng)
    participated = np.zeros(K, dtype=bool)
    delivered = np.zeros(K, dtype=bool)
    received = np.zeros(cfg.model_dim, dtype=np.complex128)
    for k in chosen:
        dev = fleet[k]
        participated[k] = True
        beta = analog_precoder(
            draws[k], dev, lam, zeta, cfg.trunc_threshold, cfg.pathloss_exponent
        )
        if beta == 0j:
            continue
        delivered[k] = True
        g = learn.local_gradient(w, dev.dataset, lc)
        faded = dev.distance_m ** (-cfg.pathloss_exponent / 2.0) * draws[k].true_fading
        received += (faded * beta) * g
    noise_scale = math.sqrt(cfg.bandwidth_hz * cfg.noise_density_w_per_hz / 2.0)
    noise = noise_scale * (
        rng.standard_normal(cfg.model_dim) + 1j * rng.standard_normal(cfg.model_dim)
    )
    est = np.real(received + noise) / zeta
    delay = cfg.model_dim * cfg.num_subbands / cfg.bandwidth_hz
    return GradientEstimate(est, Scheme.ANALOG, participated, delivered, delay)


def distortion_second_moment(rho: float, gamma_th: float, r: float) -> float:
    """Expected squared deviation of the reweighted analog coefficient from one.

    Equals distortion_constant(rho, gamma_th) / r - 1 for inclusion
    probability r; zero in the perfect-CSI, no-truncation, full-inclusion
    limit.
    """
    if not 0.0 < r <= 1.0:
        raise ValueError(f"inclusion probability must lie in (0, 1], got {r}")
    c = formulas.distortion_constant(rho, gamma_th)
    return c / max(r, EPS_R) - 1.0
