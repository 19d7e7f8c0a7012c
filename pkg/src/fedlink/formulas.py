"""Scalar closed-form expressions shared across the simulator and the bound
evaluator.

Everything in this module is plain float math with no package dependencies,
so the configuration, channel, and bound modules can all use the same
formulas without import cycles.
"""

from __future__ import annotations

import math

_EULER_GAMMA = 0.5772156649015328606

# Exponent above which 2**x - 1 overflows float64; callers get math.inf and
# downstream success probabilities collapse to zero.
_LOG2_OVERFLOW = 1000.0


def exp_integral_e1(x: float) -> float:
    """Exponential integral E1(x) = integral of exp(-t)/t from x to infinity.

    Power series for x <= 1, modified Lentz continued fraction for x > 1.
    Relative error is below 1e-10 over the positive axis (verified against
    adaptive quadrature in the test suite).
    """
    x = float(x)
    if not x > 0.0:
        raise ValueError(f"exp_integral_e1 requires x > 0, got {x}")
    if x <= 1.0:
        # E1(x) = -gamma - ln(x) + sum_{n>=1} (-1)^(n+1) x^n / (n * n!)
        total = -_EULER_GAMMA - math.log(x)
        term = 1.0  # x^n / n!
        for n in range(1, 200):
            term *= x / n
            contrib = term / n if n % 2 == 1 else -term / n
            total += contrib
            if abs(contrib) < 1e-18 * max(abs(total), 1e-300):
                break
        return total
    # Continued fraction E1(x) = exp(-x) / (x + 1 - 1/(x + 3 - 4/(x + 5 - ...)))
    # evaluated with the modified Lentz algorithm.
    tiny = 1e-300
    b = x + 1.0
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 400):
        a = -float(i * i)
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h * math.exp(-x)


def distortion_constant(csi_correlation: float, trunc_threshold: float) -> float:
    """Second-moment constant of the truncated inversion coefficient.

    Equals exp(g) + (1 - rho^2) * E1(g) * exp(2g) / (2 rho^2) for threshold g
    and estimation correlation rho.  Always >= 1, with equality approached in
    the perfect-CSI, vanishing-threshold limit.
    """
    rho = float(csi_correlation)
    g = float(trunc_threshold)
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"csi_correlation must be in (0, 1], got {rho}")
    if not g > 0.0:
        raise ValueError(f"trunc_threshold must be positive, got {g}")
    base = math.exp(g)
    if rho == 1.0:
        return base
    return base + (1.0 - rho * rho) * exp_integral_e1(g) * math.exp(2.0 * g) / (2.0 * rho * rho)


def min_rate_threshold(
    n_participants: int,
    model_dim: int,
    quant_bits: int,
    bandwidth_hz: float,
    delay_target_s: float,
) -> float:
    """Smallest SNR threshold meeting the per-round delay target.

    Returns 2^(N d (b+1) / (B T)) - 1, computed via expm1 so small exponents
    keep full precision; exponents past the float64 range yield math.inf.
    """
    if delay_target_s == math.inf:
        return 0.0
    exponent = (
        n_participants * model_dim * (quant_bits + 1) / (bandwidth_hz * delay_target_s)
    )
    if exponent > _LOG2_OVERFLOW:
        return math.inf
    return math.expm1(exponent * math.log(2.0))


def packet_success_probability(
    bandwidth_hz: float,
    noise_density_w_per_hz: float,
    theta: float,
    n_participants: int,
    power_w: float,
    distance_m: float,
    pathloss_exponent: float,
) -> float:
    """Probability that a fixed-rate uplink packet survives Rayleigh fading.

    exp(-B N0 theta / (2 N P d^-a)) for rate threshold theta; an infinite
    threshold gives zero.
    """
    if math.isinf(theta):
        return 0.0
    gain = distance_m ** (-pathloss_exponent)
    arg = bandwidth_hz * noise_density_w_per_hz * theta / (2.0 * n_participants * power_w * gain)
    if arg > 745.0:  # exp underflows to 0 anyway; avoid platform OverflowError
        return 0.0
    return math.exp(-arg)
