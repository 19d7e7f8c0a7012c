"""Experiment orchestration: Monte Carlo training runs, baseline sampling
plans, scheme comparisons, parameter sweeps, and deterministic result files.

Replications and sweep points are mutually independent given the stream
addressing in :mod:`fedlink.streams`; rows are sorted before emission so any
execution order produces identical files.
"""

from __future__ import annotations

import dataclasses
import enum
import math
import sys
from typing import Sequence

import numpy as np

from . import bounds, channel, learn, sampler, streams
from .core import (
    EPS_R,
    DeviceProfile,
    LearningConstants,
    Scheme,
    SystemConfig,
    config_digest,
    format_config,
    validate_config,
)


class ConfigError(ValueError):
    """A run was requested with a configuration that fails validation."""


class PlanKind(enum.Enum):
    """Baseline inclusion-probability assignments."""

    UNIFORM = "uniform"
    LEARNING_ORIENTED = "learning"
    CHANNEL_AWARE = "channel"
    MIN_DISTORTION = "mindist"


@dataclasses.dataclass(frozen=True, eq=False)
class TrainTrace:
    """Per-round record of one training replication."""

    scheme: Scheme
    seed: int
    replication: int
    config_hash: str
    loss: np.ndarray
    gap: np.ndarray
    participated: np.ndarray
    delivered: np.ndarray
    cum_delay: np.ndarray
    final_model: np.ndarray

    def __post_init__(self):
        rounds = self.loss.size
        if not (
            self.gap.size == rounds
            and self.cum_delay.size == rounds
            and self.participated.shape[0] == rounds
            and self.delivered.shape[0] == rounds
        ):
            raise ValueError("per-round arrays disagree on the round count")
        if np.any(self.gap < -1e-9):
            raise ValueError("optimality gap fell below the numerical slack")
        if rounds > 1 and not np.all(np.diff(self.cum_delay) > 0):
            raise ValueError("cumulative delay must increase strictly")

    @property
    def rounds(self) -> int:
        return int(self.loss.size)

    @property
    def final_gap(self) -> float:
        return float(self.gap[-1])


def run_experiment(
    cfg: SystemConfig,
    fleet: Sequence[DeviceProfile],
    lc: LearningConstants,
    scheme: Scheme,
    plan: sampler.SamplingPlan,
    rounds: int,
    replications: int,
    seed: int,
    *,
    f_star: float | None = None,
    w_init: np.ndarray | None = None,
) -> list[TrainTrace]:
    """Run federated rounds under one scheme; deterministic per (seed, rep).

    The optimality gap is measured against a high-accuracy centralized solve
    (or a caller-provided optimum value).
    """
    report = validate_config(cfg, fleet, lc, scheme)
    if not report.ok:
        raise ConfigError("; ".join(report.violations))
    if rounds < 1 or replications < 1:
        raise ValueError("need at least one round and one replication")
    datasets = [dev.dataset for dev in fleet]
    if any(ds is None for ds in datasets):
        raise ValueError("every device needs an attached dataset")
    weights = np.array([dev.weight for dev in fleet])
    if f_star is None:
        w_star = learn.solve_global_optimum(datasets, weights, lc, 1e-10)
        f_star = learn.global_loss(w_star, datasets, weights, lc)
    w0 = np.zeros(cfg.model_dim) if w_init is None else np.asarray(w_init, dtype=np.float64)

    round_fn = channel.digital_round if scheme is Scheme.DIGITAL else channel.analog_round
    digest = config_digest(cfg, lc, fleet)
    traces = []
    for rep in range(replications):
        w = w0.copy()
        loss = np.empty(rounds)
        gap = np.empty(rounds)
        participated = np.zeros((rounds, len(fleet)), dtype=bool)
        delivered = np.zeros((rounds, len(fleet)), dtype=bool)
        cum_delay = np.empty(rounds)
        elapsed = 0.0
        for m in range(rounds):
            rng_sample, rng_round = streams.round_streams(seed, rep, m)
            parts = sampler.sample_participants(plan, rng_sample)
            est = round_fn(w, fleet, parts, cfg, lc, rng_round)
            w = learn.gd_step(w, est.vector, cfg.learning_rate)
            loss[m] = learn.global_loss(w, datasets, weights, lc)
            gap[m] = loss[m] - f_star
            participated[m] = est.participated
            delivered[m] = est.delivered
            elapsed += est.round_delay_s
            cum_delay[m] = elapsed
        traces.append(
            TrainTrace(
                scheme=scheme,
                seed=seed,
                replication=rep,
                config_hash=digest,
                loss=loss,
                gap=gap,
                participated=participated,
                delivered=delivered,
                cum_delay=cum_delay,
                final_model=w,
            )
        )
    return traces


def bound_curve(
    cfg: SystemConfig,
    fleet: Sequence[DeviceProfile],
    lc: LearningConstants,
    scheme: Scheme,
    m_max: int,
    init_dist_sq: float,
) -> np.ndarray:
    """Closed-form envelope matching :func:`run_experiment` round indexing.

    Entry m bounds the expected gap after round m+1.
    """
    alpha, r, dists = bounds.fleet_arrays(fleet)
    if scheme is Scheme.DIGITAL:
        p = bounds.success_probabilities(cfg, fleet)
        g = bounds.virtual_weight_digital(alpha, r, p)
        phi_b = bounds.quantizer_variance_bound(lc.quant_range_sq, cfg.quant_bits)
        const = bounds.digital_const_term(lc, phi_b, g)
    else:
        g = bounds.virtual_weight_analog(alpha, r, cfg.csi_correlation, cfg.trunc_threshold)
        phi = bounds.noise_term(cfg, alpha, r, dists, lc, cfg.power_mode)
        const = bounds.analog_const_term(lc, phi, g)
    return bounds.convergence_curve(lc, cfg.learning_rate, g, const, m_max, init_dist_sq)


def _cap_and_floor(raw: np.ndarray, n: int) -> np.ndarray:
    """Scale to sum n, then push violations to the box edges and rebalance.

    Iterates to a fixpoint: capped devices keep exactly 1, floored devices
    keep the floor, and the free remainder is rescaled proportionally.
    """
    K = raw.size
    if n > K:
        raise ValueError(f"cannot target {n} inclusions with {K} devices")
    r = raw * (n / raw.sum())
    fixed_hi = np.zeros(K, dtype=bool)
    fixed_lo = np.zeros(K, dtype=bool)
    for _ in range(2 * K + 2):
        r[fixed_hi] = 1.0
        r[fixed_lo] = EPS_R
        free = ~(fixed_hi | fixed_lo)
        residual = n - float(r[~free].sum())
        if np.any(free):
            r[free] *= residual / float(r[free].sum())
        over = free & (r > 1.0)
        under = free & (r < EPS_R)
        if not np.any(over) and not np.any(under):
            break
        fixed_hi |= over
        fixed_lo |= under
    return np.clip(r, EPS_R, 1.0)


def baseline_plan(
    kind: PlanKind,
    fleet: Sequence[DeviceProfile],
    N: int,
    pathloss_exponent: float,
) -> sampler.SamplingPlan:
    """Reference inclusion-probability assignments used for comparison.

    Uniform gives everyone N/K; the others are proportional to dataset
    weight, to the large-scale channel gain, or to weight times the inverse
    gain, each rescaled to sum N with any overflow capped at one and
    redistributed to a fixpoint.
    """
    alpha = np.array([dev.weight for dev in fleet])
    dists = np.array([dev.distance_m for dev in fleet])
    if kind is PlanKind.UNIFORM:
        raw = np.ones(len(fleet))
    elif kind is PlanKind.LEARNING_ORIENTED:
        raw = alpha.copy()
    elif kind is PlanKind.CHANNEL_AWARE:
        raw = dists ** (-pathloss_exponent / 2.0)
    elif kind is PlanKind.MIN_DISTORTION:
        raw = alpha * dists ** (pathloss_exponent / 2.0)
    else:
        raise ValueError(f"unknown plan kind {kind!r}")
    probs = _cap_and_floor(raw, N)
    return sampler.SamplingPlan(probs, N)


def optimized_plan(
    cfg: SystemConfig,
    fleet: Sequence[DeviceProfile],
    lc: LearningConstants,
    scheme: Scheme,
) -> sampler.SamplingPlan:
    """Scheme-specific optimizer output wrapped as a sampling plan."""
    from . import optimize

    N = cfg.participants_per_round
    if scheme is Scheme.DIGITAL:
        alpha, _, _ = bounds.fleet_arrays(fleet)
        p = bounds.success_probabilities(cfg, fleet)
        result = optimize.optimize_inclusion_digital(alpha, p, N)
    else:
        result = optimize.dinkelbach_analog(cfg, fleet, lc, N)
    return sampler.SamplingPlan(result.probs, N)


def _with_plan(fleet: Sequence[DeviceProfile], plan: sampler.SamplingPlan) -> list[DeviceProfile]:
    """Fleet copy carrying the plan's inclusion probabilities."""
    return [
        dataclasses.replace(dev, inclusion_prob=float(p))
        for dev, p in zip(fleet, plan.probs)
    ]


def _mean_stderr(values: np.ndarray) -> tuple[float, float]:
    mean = float(values.mean())
    if values.size < 2:
        return mean, 0.0
    return mean, float(values.std(ddof=1) / math.sqrt(values.size))


def compare_schemes(
    cfg: SystemConfig,
    fleet: Sequence[DeviceProfile],
    lc: LearningConstants,
    plans: dict[str, sampler.SamplingPlan],
    rounds: int,
    replications: int,
    seed: int,
    *,
    holdout: learn.LocalDataset | None = None,
) -> list[dict]:
    """Run both schemes under every plan with identical budgets.

    Each row reports the Monte Carlo final gap (mean and standard error),
    the mean per-round delay, the closed-form stationary gap for that plan,
    and echoes the shared budget fields so the fairness contract is visible.
    """
    if not plans:
        raise ValueError("no sampling plans supplied")
    datasets = [dev.dataset for dev in fleet]
    weights = np.array([dev.weight for dev in fleet])
    w_star = learn.solve_global_optimum(datasets, weights, lc, 1e-10)
    f_star = learn.global_loss(w_star, datasets, weights, lc)

    rows = []
    for scheme in (Scheme.DIGITAL, Scheme.ANALOG):
        for name in sorted(plans):
            plan = plans[name]
            planned = _with_plan(fleet, plan)
            traces = run_experiment(
                cfg, planned, lc, scheme, plan, rounds, replications, seed, f_star=f_star
            )
            finals = np.array([t.final_gap for t in traces])
            mean_gap, stderr = _mean_stderr(finals)
            delay = float(np.mean([t.cum_delay[-1] / t.rounds for t in traces]))
            report = bounds.build_bound_report(cfg, planned, lc)
            bound_gap = report.gap_digital if scheme is Scheme.DIGITAL else report.gap_analog
            feasible = (
                report.lr_feasible_digital
                if scheme is Scheme.DIGITAL
                else report.lr_feasible_analog
            )
            acc = math.nan
            if holdout is not None:
                acc = float(
                    np.mean([learn.accuracy(t.final_model, holdout) for t in traces])
                )
            rows.append(
                {
                    "scheme": scheme.value,
                    "plan": name,
                    "delay_target_s": cfg.delay_target_s,
                    "power_budget_w": cfg.power_budget_w,
                    "power_mode": cfg.power_mode.value,
                    "rounds": rounds,
                    "replications": replications,
                    "mean_final_gap": mean_gap,
                    "stderr_final_gap": stderr,
                    "mean_round_delay_s": delay,
                    "bound_gap": bound_gap,
                    "bound_feasible": feasible,
                    "holdout_accuracy": acc,
                    "config_hash": config_digest(cfg, lc, fleet),
                }
            )
    return rows


class SweepAxis(enum.Enum):
    POWER = "power"
    DEVICES = "devices"
    RHO = "rho"
    BITS = "bits"
    THRESHOLD = "threshold"


def sweep(
    cfg: SystemConfig,
    fleet: Sequence[DeviceProfile],
    lc: LearningConstants,
    axis: SweepAxis,
    grid: Sequence[float],
    *,
    rounds: int = 0,
    replications: int = 0,
    seed: int = 0,
    plan_kind: PlanKind = PlanKind.UNIFORM,
) -> list[dict]:
    """Evaluate bounds (and optionally simulations) along one parameter axis.

    Infeasible grid points are flagged in the row rather than aborting the
    sweep.  With ``replications`` zero only the closed-form columns are
    filled.
    """
    if len(grid) == 0:
        raise ValueError("sweep grid is empty")
    rows = []
    for value in grid:
        cfg_v = cfg
        fleet_v = list(fleet)
        if axis is SweepAxis.POWER:
            cfg_v = dataclasses.replace(cfg, power_budget_w=float(value))
        elif axis is SweepAxis.DEVICES:
            n = int(value)
            cfg_v = dataclasses.replace(cfg, participants_per_round=n)
        elif axis is SweepAxis.RHO:
            cfg_v = dataclasses.replace(cfg, csi_correlation=float(value))
        elif axis is SweepAxis.BITS:
            cfg_v = dataclasses.replace(cfg, quant_bits=int(value))
        elif axis is SweepAxis.THRESHOLD:
            cfg_v = dataclasses.replace(cfg, trunc_threshold=float(value))
        else:
            raise ValueError(f"unknown sweep axis {axis!r}")

        plan = baseline_plan(
            plan_kind, fleet_v, cfg_v.participants_per_round, cfg_v.pathloss_exponent
        )
        fleet_v = _with_plan(fleet_v, plan)
        report = bounds.build_bound_report(cfg_v, fleet_v, lc)
        row = {
            "axis": axis.value,
            "value": float(value),
            "g_digital": report.g_digital,
            "g_analog": report.g_analog,
            "phi_quant": report.phi_quant,
            "phi_max": report.phi_max,
            "phi_ave": report.phi_ave,
            "gap_digital": report.gap_digital,
            "gap_analog": report.gap_analog,
            "gap_analog_ave": report.gap_analog_ave,
            "gap_digital_inf": report.gap_digital_inf,
            "gap_analog_inf": report.gap_analog_inf,
            "feasible_digital": report.lr_feasible_digital,
            "feasible_analog": report.lr_feasible_analog,
            "sim_gap_digital": math.nan,
            "sim_gap_analog": math.nan,
            "config_hash": config_digest(cfg, lc, fleet),
        }
        if replications > 0 and rounds > 0:
            for scheme in (Scheme.DIGITAL, Scheme.ANALOG):
                feasible = (
                    report.lr_feasible_digital
                    if scheme is Scheme.DIGITAL
                    else report.lr_feasible_analog
                )
                if not feasible:
                    continue
                traces = run_experiment(
                    cfg_v, fleet_v, lc, scheme, plan, rounds, replications, seed
                )
                key = "sim_gap_digital" if scheme is Scheme.DIGITAL else "sim_gap_analog"
                row[key] = float(np.mean([t.final_gap for t in traces]))
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# Deterministic result files
# ---------------------------------------------------------------------------


def _format_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_table(path, rows: Sequence[dict], fieldnames: Sequence[str] | None = None) -> None:
    """Write rows as comma-separated text with one header row.

    Refuses to mix rows from different configurations in one table.
    """
    if not rows:
        raise ValueError("refusing to write an empty table")
    hashes = {row.get("config_hash") for row in rows if "config_hash" in row}
    if len(hashes) > 1:
        raise ValueError("rows from different configurations cannot share a table")
    names = list(fieldnames) if fieldnames is not None else list(rows[0].keys())
    lines = [",".join(names)]
    for row in rows:
        lines.append(",".join(_format_cell(row[n]) for n in names))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def trace_rows(traces: Sequence[TrainTrace]) -> list[dict]:
    """Flatten traces to one row per (replication, round)."""
    rows = []
    for t in traces:
        for m in range(t.rounds):
            rows.append(
                {
                    "scheme": t.scheme.value,
                    "replication": t.replication,
                    "round": m + 1,
                    "loss": float(t.loss[m]),
                    "gap": float(t.gap[m]),
                    "cum_delay_s": float(t.cum_delay[m]),
                    "participated": "".join("1" if b else "0" for b in t.participated[m]),
                    "delivered": "".join("1" if b else "0" for b in t.delivered[m]),
                    "config_hash": t.config_hash,
                }
            )
    return rows


def write_manifest(path, cfg, lc, fleet, extra: dict | None = None) -> None:
    """Echo the full configuration, its hash, and tool versions.

    Contains nothing time- or path-dependent, so identical runs produce
    byte-identical manifests.
    """
    import fedlink

    lines = ["# run manifest"]
    for key, value in sorted((extra or {}).items()):
        lines.append(f"arg.{key} = {_format_cell(value)}")
    lines.append(f"config_hash = {config_digest(cfg, lc, fleet)}")
    lines.append(f"version.python = {sys.version_info.major}.{sys.version_info.minor}.{sys.version_info.micro}")
    lines.append(f"version.numpy = {np.__version__}")
    lines.append(f"version.fedlink = {fedlink.__version__}")
    lines.append("")
    lines.append(format_config(cfg, lc, fleet).rstrip("\n"))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
