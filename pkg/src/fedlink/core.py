"""Shared domain types, feasibility validation, and configuration-file I/O.

All types here are immutable after construction and safe to share across
parallel workers.  Power values are stored in watts; the CLI offers dBm
convenience flags and converts with ``dbm_to_watts``.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import math
from typing import Sequence

from . import formulas

# Floor applied to every inclusion probability wherever 1/r appears, and the
# lower bound used by the sampling optimizers.
EPS_R = 1e-6

WEIGHT_SUM_TOL = 1e-9
PROB_SUM_TOL = 1e-9


class PowerMode(enum.Enum):
    """Which transmit power budget the uplink must respect."""

    MAX = "max"
    AVERAGE = "average"


class Scheme(enum.Enum):
    """Uplink transmission scheme."""

    DIGITAL = "digital"
    ANALOG = "analog"


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    if watts <= 0:
        raise ValueError("power must be positive to express in dBm")
    return 10.0 * math.log10(watts) + 30.0


@dataclasses.dataclass(frozen=True)
class SystemConfig:
    """Physical-layer and round-level constants shared by both schemes.

    ``side_info_bits`` covers the two range values sent alongside each
    quantized update; the default of 64 assumes two 32-bit floats.
    """

    bandwidth_hz: float
    noise_density_w_per_hz: float
    pathloss_exponent: float
    power_budget_w: float
    delay_target_s: float
    num_subbands: int
    quant_bits: int
    trunc_threshold: float
    csi_correlation: float
    learning_rate: float
    model_dim: int
    participants_per_round: int
    num_devices: int
    power_mode: PowerMode = PowerMode.MAX
    side_info_bits: int = 64


@dataclasses.dataclass(frozen=True)
class LearningConstants:
    """Curvature and heterogeneity constants of the learning task.

    ``local_global_distance`` is the distance bound between local and global
    optima; formulas use its square.
    """

    strong_convexity: float
    smoothness: float
    grad_bound: float
    local_global_distance: float
    quant_range_sq: float


@dataclasses.dataclass(frozen=True, eq=False)
class DeviceProfile:
    """Per-device dataset weight, placement, and sampling probability."""

    weight: float
    distance_m: float
    inclusion_prob: float
    dataset: object | None = None


@dataclasses.dataclass(frozen=True)
class ValidationReport:
    """Outcome of a feasibility check; callers decide whether to abort."""

    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def digital_virtual_weight(cfg: SystemConfig, fleet: Sequence[DeviceProfile]) -> float:
    """Sum of weight / (success prob * inclusion prob) over the fleet."""
    theta = formulas.min_rate_threshold(
        cfg.participants_per_round,
        cfg.model_dim,
        cfg.quant_bits,
        cfg.bandwidth_hz,
        cfg.delay_target_s,
    )
    total = 0.0
    for dev in fleet:
        p = formulas.packet_success_probability(
            cfg.bandwidth_hz,
            cfg.noise_density_w_per_hz,
            theta,
            cfg.participants_per_round,
            cfg.power_budget_w,
            dev.distance_m,
            cfg.pathloss_exponent,
        )
        if p <= 0.0:
            return math.inf
        total += dev.weight / (p * max(dev.inclusion_prob, EPS_R))
    return total


def analog_virtual_weight(cfg: SystemConfig, fleet: Sequence[DeviceProfile]) -> float:
    """Distortion-weighted inclusion sum for the over-the-air scheme."""
    c = formulas.distortion_constant(cfg.csi_correlation, cfg.trunc_threshold)
    return c * sum(dev.weight / max(dev.inclusion_prob, EPS_R) for dev in fleet) - 1.0


def learning_rate_limit(lc: LearningConstants, virtual_weight: float) -> float:
    """Largest stable learning rate for a given virtual sum weight."""
    if math.isinf(virtual_weight):
        return 0.0
    return lc.strong_convexity / (2.0 * lc.smoothness**2 * virtual_weight)


def validate_config(
    cfg: SystemConfig,
    fleet: Sequence[DeviceProfile],
    lc: LearningConstants,
    scheme: Scheme | None = None,
) -> ValidationReport:
    """Check every shared invariant plus the learning-rate stability condition.

    ``scheme=None`` checks the learning-rate condition for both schemes;
    passing a scheme restricts that check to it.  Idempotent and side-effect
    free.
    """
    v: list[str] = []

    for name in (
        "bandwidth_hz",
        "noise_density_w_per_hz",
        "pathloss_exponent",
        "power_budget_w",
        "delay_target_s",
        "trunc_threshold",
        "learning_rate",
    ):
        if not getattr(cfg, name) > 0:
            v.append(f"{name} must be positive")
    for name in (
        "num_subbands",
        "quant_bits",
        "side_info_bits",
        "model_dim",
        "participants_per_round",
        "num_devices",
    ):
        if int(getattr(cfg, name)) < 1:
            v.append(f"{name} must be a positive integer")
    if not 0.0 < cfg.csi_correlation <= 1.0:
        v.append("csi_correlation must lie in (0, 1]")

    if cfg.participants_per_round > cfg.num_devices:
        v.append("participants_per_round cannot exceed num_devices")
    if cfg.participants_per_round > cfg.num_subbands:
        v.append("participants_per_round cannot exceed num_subbands")
    analog_delay = cfg.model_dim * cfg.num_subbands / cfg.bandwidth_hz
    if cfg.delay_target_s < analog_delay * (1.0 - 1e-12):
        v.append(
            "delay_target_s is below the fixed analog round delay "
            f"({analog_delay:.6g} s)"
        )

    if len(fleet) != cfg.num_devices:
        v.append(f"fleet has {len(fleet)} devices, config says {cfg.num_devices}")
    for i, dev in enumerate(fleet):
        if not 0.0 < dev.weight <= 1.0:
            v.append(f"device {i}: weight must lie in (0, 1]")
        if not dev.distance_m > 0.0:
            v.append(f"device {i}: distance_m must be positive")
        if not 0.0 < dev.inclusion_prob <= 1.0:
            v.append(f"device {i}: inclusion_prob must lie in (0, 1]")
    if fleet:
        wsum = sum(dev.weight for dev in fleet)
        if abs(wsum - 1.0) > WEIGHT_SUM_TOL:
            v.append(f"device weights must sum to 1 (got {wsum!r})")
        rsum = sum(dev.inclusion_prob for dev in fleet)
        if abs(rsum - cfg.participants_per_round) > PROB_SUM_TOL:
            v.append(
                "inclusion probabilities must sum to participants_per_round "
                f"(got {rsum!r}, expected {cfg.participants_per_round})"
            )

    if not lc.strong_convexity > 0:
        v.append("strong_convexity must be positive")
    if not lc.smoothness > 0:
        v.append("smoothness must be positive")
    if lc.strong_convexity > lc.smoothness:
        v.append("strong_convexity cannot exceed smoothness")
    if not lc.grad_bound > 0:
        v.append("grad_bound must be positive")
    if lc.local_global_distance < 0:
        v.append("local_global_distance cannot be negative")
    if not lc.quant_range_sq > 0:
        v.append("quant_range_sq must be positive")

    # Learning-rate stability: eta must stay strictly below mu / (2 L^2 g)
    # for the scheme's virtual sum weight g, otherwise the stationary gap
    # diverges.  Only meaningful once the structural checks above pass.
    if not v:
        checks = []
        if scheme in (None, Scheme.DIGITAL):
            checks.append((Scheme.DIGITAL, digital_virtual_weight(cfg, fleet)))
        if scheme in (None, Scheme.ANALOG):
            checks.append((Scheme.ANALOG, analog_virtual_weight(cfg, fleet)))
        for sch, g in checks:
            limit = learning_rate_limit(lc, g)
            if not cfg.learning_rate < limit:
                v.append(
                    f"learning rate {cfg.learning_rate!r} violates the "
                    f"{sch.value} stability condition (must be below {limit!r})"
                )

    return ValidationReport(tuple(v))


# ---------------------------------------------------------------------------
# Configuration files: flat "section.key = value" text, one device per index.
# ---------------------------------------------------------------------------

_SYSTEM_FIELDS = [f.name for f in dataclasses.fields(SystemConfig)]
_LEARNING_FIELDS = [f.name for f in dataclasses.fields(LearningConstants)]
_DEVICE_FIELDS = ["weight", "distance_m", "inclusion_prob"]

_INT_FIELDS = {
    "num_subbands",
    "quant_bits",
    "side_info_bits",
    "model_dim",
    "participants_per_round",
    "num_devices",
}


def format_config(
    cfg: SystemConfig, lc: LearningConstants, fleet: Sequence[DeviceProfile]
) -> str:
    """Serialize a configuration to the canonical key-value text form.

    The output is deterministic (fixed key order, repr floats) so it doubles
    as the hashing preimage for run manifests.
    """
    lines = []
    for name in _SYSTEM_FIELDS:
        value = getattr(cfg, name)
        if isinstance(value, PowerMode):
            lines.append(f"system.{name} = {value.value}")
        else:
            lines.append(f"system.{name} = {value!r}")
    for name in _LEARNING_FIELDS:
        lines.append(f"learning.{name} = {getattr(lc, name)!r}")
    for i, dev in enumerate(fleet):
        for name in _DEVICE_FIELDS:
            lines.append(f"device.{i}.{name} = {getattr(dev, name)!r}")
    return "\n".join(lines) + "\n"


def parse_config_text(
    text: str,
) -> tuple[SystemConfig, LearningConstants, list[DeviceProfile]]:
    """Parse the key-value schema produced by :func:`format_config`."""
    system: dict[str, object] = {}
    learning: dict[str, float] = {}
    devices: dict[int, dict[str, float]] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        parts = key.split(".")
        if parts[0] == "system" and len(parts) == 2:
            name = parts[1]
            if name not in _SYSTEM_FIELDS:
                raise ValueError(f"line {lineno}: unknown system key {name!r}")
            if name == "power_mode":
                system[name] = PowerMode(value.lower())
            elif name in _INT_FIELDS:
                system[name] = int(value)
            else:
                system[name] = float(value)
        elif parts[0] == "learning" and len(parts) == 2:
            name = parts[1]
            if name not in _LEARNING_FIELDS:
                raise ValueError(f"line {lineno}: unknown learning key {name!r}")
            learning[name] = float(value)
        elif parts[0] == "device" and len(parts) == 3:
            idx = int(parts[1])
            name = parts[2]
            if name not in _DEVICE_FIELDS:
                raise ValueError(f"line {lineno}: unknown device key {name!r}")
            devices.setdefault(idx, {})[name] = float(value)
        else:
            raise ValueError(f"line {lineno}: unrecognized key {key!r}")

    missing = [n for n in _SYSTEM_FIELDS if n not in system and n not in ("power_mode", "side_info_bits")]
    if missing:
        raise ValueError(f"missing system keys: {', '.join(missing)}")
    missing = [n for n in _LEARNING_FIELDS if n not in learning]
    if missing:
        raise ValueError(f"missing learning keys: {', '.join(missing)}")

    cfg = SystemConfig(**system)  # type: ignore[arg-type]
    lc = LearningConstants(**learning)

    fleet = []
    for i in range(len(devices)):
        if i not in devices:
            raise ValueError(f"device indices must be contiguous from 0; missing {i}")
        entry = devices[i]
        missing = [n for n in _DEVICE_FIELDS if n not in entry]
        if missing:
            raise ValueError(f"device {i}: missing keys {', '.join(missing)}")
        fleet.append(DeviceProfile(**entry))
    return cfg, lc, fleet


def read_config_file(path) -> tuple[SystemConfig, LearningConstants, list[DeviceProfile]]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def write_config_file(path, cfg, lc, fleet) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_config(cfg, lc, fleet))


def config_digest(
    cfg: SystemConfig, lc: LearningConstants, fleet: Sequence[DeviceProfile]
) -> str:
    """Stable hash of the full configuration, used to tag emitted rows."""
    text = format_config(cfg, lc, fleet)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
