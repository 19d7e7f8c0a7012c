"""Command-line front end.

Subcommands: ``simulate``, ``bounds``, ``optimize``, ``sweep``, ``compare``.
Every configuration key has a matching flag; ``--config FILE`` ingests the
key-value schema first and flags override it.  Powers may be given in watts
or dBm (the dBm flags convert on ingestion; everything downstream is watts).
Outputs are comma-separated tables plus a run manifest that echoes the full
configuration and its hash; identical invocations produce byte-identical
files.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from . import bounds, harness, learn, optimize, streams
from .core import (
    DeviceProfile,
    LearningConstants,
    PowerMode,
    Scheme,
    SystemConfig,
    dbm_to_watts,
    read_config_file,
    validate_config,
)
from .harness import PlanKind, SweepAxis
from .sampler import SamplingPlan

_SYSTEM_FLAGS = {
    "bandwidth_hz": float,
    "noise_density_w_per_hz": float,
    "pathloss_exponent": float,
    "power_budget_w": float,
    "delay_target_s": float,
    "num_subbands": int,
    "quant_bits": int,
    "side_info_bits": int,
    "trunc_threshold": float,
    "csi_correlation": float,
    "learning_rate": float,
    "model_dim": int,
    "participants_per_round": int,
    "num_devices": int,
}

_LEARNING_FLAGS = {
    "strong_convexity": float,
    "smoothness": float,
    "grad_bound": float,
    "local_global_distance": float,
    "quant_range_sq": float,
}

_DEFAULTS = {
    "bandwidth_hz": 1e6,
    "noise_density_w_per_hz": 1e-11,
    "pathloss_exponent": 3.0,
    "power_budget_w": 0.1,
    "num_subbands": 10,
    "quant_bits": 6,
    "side_info_bits": 64,
    "trunc_threshold": 0.5,
    "csi_correlation": 0.9,
    "learning_rate": None,
    "model_dim": 8,
    "participants_per_round": 5,
    "num_devices": 10,
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key-value configuration file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    for name, typ in _SYSTEM_FLAGS.items():
        p.add_argument(f"--{name.replace('_', '-')}", type=typ, default=None)
    p.add_argument("--power-mode", choices=["max", "average"], default=None)
    p.add_argument("--power-budget-dbm", type=float, default=None,
                   help="power budget in dBm (converted to watts)")
    p.add_argument("--noise-density-dbm-per-hz", type=float, default=None,
                   help="noise density in dBm/Hz (converted to W/Hz)")
    p.add_argument("--delay-slack", type=float, default=2.0,
                   help="delay target as a multiple of the analog round delay "
                        "(used when --delay-target-s is absent)")
    for name, typ in _LEARNING_FLAGS.items():
        p.add_argument(f"--{name.replace('_', '-')}", type=typ, default=None)
    p.add_argument("--cell-size-m", type=float, default=50.0,
                   help="half-size of the square deployment area")
    p.add_argument("--min-distance-m", type=float, default=5.0)
    p.add_argument("--geometry-seed", type=int, default=None,
                   help="defaults to --seed")
    p.add_argument("--data-seed", type=int, default=None, help="defaults to --seed")
    p.add_argument("--classes-per-device", type=int, default=2, choices=[1, 2])
    p.add_argument("--total-samples", type=int, default=600)
    p.add_argument("--probe-models", type=int, default=20,
                   help="probes used when estimating learning constants")
    p.add_argument("--plan", default=None,
                   choices=["uniform", "learning", "channel", "mindist", "optimized"],
                   help="sampling plan; defaults to the config file's probabilities "
                        "or uniform when no file is given")


def _synth_distances(args, K: int) -> np.ndarray:
    seed = args.seed if args.geometry_seed is None else args.geometry_seed
    rng = streams.substream(seed, streams.PURPOSE_DATA, 0)
    xy = rng.uniform(-args.cell_size_m, args.cell_size_m, size=(K, 2))
    return np.maximum(np.hypot(xy[:, 0], xy[:, 1]), args.min_distance_m)


def _attach_datasets(args, cfg, weights_hint: np.ndarray | None):
    """Generate per-device datasets; sizes follow the weight hint if given."""
    seed = args.seed if args.data_seed is None else args.data_seed
    feature_dim = cfg.model_dim - 1
    if weights_hint is None:
        fleet_data = learn.gen_synthetic_fleet(
            cfg.num_devices, args.classes_per_device, seed, feature_dim=feature_dim
        )
    else:
        sizes = np.maximum(1, np.round(weights_hint * args.total_samples)).astype(int)
        fleet_data = _datasets_with_sizes(
            cfg.num_devices, args.classes_per_device, seed, feature_dim, sizes
        )
    holdout = learn.pooled_dataset(
        learn.gen_synthetic_fleet(
            cfg.num_devices, args.classes_per_device, seed + 1,
            feature_dim=feature_dim, center_seed=seed,
        )
    )
    return fleet_data, holdout


def _datasets_with_sizes(K, classes_per_device, seed, feature_dim, sizes):
    """Synthetic datasets with prescribed per-device sample counts."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, learn.CLUSTER_CENTER_SCALE, size=(learn.NUM_CLUSTERS, feature_dim))
    out = []
    for k in range(K):
        clusters = [k % learn.NUM_CLUSTERS]
        if classes_per_device == 2:
            other = int(rng.integers(learn.NUM_CLUSTERS - 1))
            if other >= clusters[0]:
                other += 1
            clusters.append(other)
        which = rng.integers(len(clusters), size=int(sizes[k]))
        assignments = np.asarray(clusters)[which]
        features = centers[assignments] + rng.normal(
            0.0, learn.CLUSTER_STD, size=(int(sizes[k]), feature_dim)
        )
        labels = (assignments == learn.POSITIVE_CLUSTER).astype(np.int8)
        out.append(learn.LocalDataset(features, labels))
    return out


def _resolve(args, *, need_data: bool):
    """Build (cfg, lc, fleet, holdout) from a config file plus flag overrides."""
    file_fleet = None
    system: dict = {}
    learning: dict = {}
    if args.config:
        cfg0, lc0, file_fleet = read_config_file(args.config)
        system = {f.name: getattr(cfg0, f.name) for f in dataclasses.fields(SystemConfig)}
        learning = dataclasses.asdict(lc0)
    else:
        system = dict(_DEFAULTS)
        system["power_mode"] = PowerMode.MAX

    for name in _SYSTEM_FLAGS:
        value = getattr(args, name)
        if value is not None:
            system[name] = value
    if args.power_mode is not None:
        system["power_mode"] = PowerMode(args.power_mode)
    if args.power_budget_dbm is not None:
        system["power_budget_w"] = dbm_to_watts(args.power_budget_dbm)
    if args.noise_density_dbm_per_hz is not None:
        system["noise_density_w_per_hz"] = dbm_to_watts(args.noise_density_dbm_per_hz)
    if system.get("delay_target_s") is None:
        analog_delay = system["model_dim"] * system["num_subbands"] / system["bandwidth_hz"]
        system["delay_target_s"] = args.delay_slack * analog_delay
    auto_eta = system.get("learning_rate") is None
    if auto_eta:
        system["learning_rate"] = 1.0  # placeholder until the constants are known
    cfg = SystemConfig(**system)

    if file_fleet is not None and len(file_fleet) != cfg.num_devices:
        raise SystemExit("config file fleet size disagrees with num_devices")

    # Fleet geometry and weights.
    if file_fleet is not None:
        distances = np.array([dev.distance_m for dev in file_fleet])
        weights = np.array([dev.weight for dev in file_fleet])
        probs = np.array([dev.inclusion_prob for dev in file_fleet])
    else:
        distances = _synth_distances(args, cfg.num_devices)
        weights = None
        probs = None

    datasets = [None] * cfg.num_devices
    holdout = None
    if need_data or weights is None:
        datasets, holdout = _attach_datasets(args, cfg, weights)
        realized = learn.fleet_weights(datasets)
        weights = realized

    fleet = [
        DeviceProfile(
            weight=float(weights[k]),
            distance_m=float(distances[k]),
            inclusion_prob=float(probs[k]) if probs is not None else float(
                cfg.participants_per_round / cfg.num_devices
            ),
            dataset=datasets[k],
        )
        for k in range(cfg.num_devices)
    ]

    # Learning constants: file/flags, estimated from data when absent.
    overrides = {n: getattr(args, n) for n in _LEARNING_FLAGS if getattr(args, n) is not None}
    if learning:
        learning.update(overrides)
        lc = LearningConstants(**learning)
    elif len(overrides) == len(_LEARNING_FLAGS):
        lc = LearningConstants(**overrides)
    else:
        if any(ds is None for ds in datasets):
            datasets, holdout = _attach_datasets(args, cfg, weights)
            fleet = [dataclasses.replace(dev, dataset=ds) for dev, ds in zip(fleet, datasets)]
        reg = overrides.get("strong_convexity", 1.0)
        lc = learn.estimate_constants(datasets, args.probe_models, args.seed, reg=reg)
        lc = dataclasses.replace(lc, **overrides)

    if auto_eta:
        # Pick a safely stable rate from the uniform-plan virtual weights.
        from .core import analog_virtual_weight, digital_virtual_weight, learning_rate_limit

        limit = min(
            learning_rate_limit(lc, digital_virtual_weight(cfg, fleet)),
            learning_rate_limit(lc, analog_virtual_weight(cfg, fleet)),
        )
        if not limit > 0:
            raise SystemExit("cannot auto-select a learning rate; pass --learning-rate")
        cfg = dataclasses.replace(cfg, learning_rate=0.3 * limit)

    # A requested sampling plan replaces the per-device probabilities; without
    # one, a config file's probabilities are kept as-is.
    if args.plan is not None:
        fleet = _apply_plan(args.plan, cfg, fleet, lc)
    elif file_fleet is None:
        fleet = _apply_plan("uniform", cfg, fleet, lc)
    return cfg, lc, fleet, holdout, auto_eta


def _apply_plan(plan_name: str, cfg, fleet, lc):
    n = cfg.participants_per_round
    if plan_name == "optimized":
        # Scheme-specific plans are materialized by the subcommands; default
        # the shared fleet to the digital solution for bookkeeping.
        plan = harness.optimized_plan(cfg, fleet, lc, Scheme.DIGITAL)
    elif plan_name == "uniform":
        plan = harness.baseline_plan(PlanKind.UNIFORM, fleet, n, cfg.pathloss_exponent)
    else:
        plan = harness.baseline_plan(PlanKind(plan_name), fleet, n, cfg.pathloss_exponent)
    return [
        dataclasses.replace(dev, inclusion_prob=float(p))
        for dev, p in zip(fleet, plan.probs)
    ]


def _plan_of(fleet) -> SamplingPlan:
    probs = np.array([dev.inclusion_prob for dev in fleet])
    return SamplingPlan(probs, int(round(float(probs.sum()))))


def _tighten_eta(cfg, fleet, lc, plans, schemes):
    """Shrink an auto-selected learning rate below every plan's stability limit."""
    from .core import learning_rate_limit

    alpha, _, _ = bounds.fleet_arrays(fleet)
    p = bounds.success_probabilities(cfg, fleet)
    limits = []
    for plan in plans:
        r = np.asarray(plan.probs)
        for scheme in schemes:
            if scheme is Scheme.DIGITAL:
                g = bounds.virtual_weight_digital(alpha, r, p)
            else:
                g = bounds.virtual_weight_analog(
                    alpha, r, cfg.csi_correlation, cfg.trunc_threshold
                )
            limits.append(learning_rate_limit(lc, g))
    target = 0.8 * min(limits)
    if not target > 0:
        raise SystemExit("cannot auto-select a learning rate; pass --learning-rate")
    if cfg.learning_rate <= target:
        return cfg
    return dataclasses.replace(cfg, learning_rate=target)


def _check(cfg, fleet, lc, scheme=None) -> None:
    report = validate_config(cfg, fleet, lc, scheme)
    if not report.ok:
        for line in report.violations:
            print(f"configuration error: {line}", file=sys.stderr)
        raise SystemExit(2)


def _outdir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _manifest_args(args, names) -> dict:
    return {n: getattr(args, n) for n in names}


def cmd_simulate(args) -> int:
    cfg, lc, fleet, _, auto_eta = _resolve(args, need_data=True)
    scheme = Scheme(args.scheme)
    if args.plan == "optimized":
        plan = harness.optimized_plan(cfg, fleet, lc, scheme)
        fleet = [dataclasses.replace(d, inclusion_prob=float(p))
                 for d, p in zip(fleet, plan.probs)]
    if auto_eta:
        cfg = _tighten_eta(cfg, fleet, lc, [_plan_of(fleet)], [scheme])
    _check(cfg, fleet, lc, scheme)
    plan = _plan_of(fleet)
    traces = harness.run_experiment(
        cfg, fleet, lc, scheme, plan, args.rounds, args.replications, args.seed
    )
    out = _outdir(args)
    harness.write_table(os.path.join(out, "trace.csv"), harness.trace_rows(traces))
    harness.write_manifest(
        os.path.join(out, "manifest.txt"), cfg, lc, fleet,
        _manifest_args(args, ["seed", "rounds", "replications", "scheme", "plan"]),
    )
    print(f"wrote {out}/trace.csv ({len(traces)} replications)")
    return 0


def cmd_bounds(args) -> int:
    cfg, lc, fleet, _, _ = _resolve(args, need_data=False)
    report = bounds.build_bound_report(cfg, fleet, lc)
    row = dataclasses.asdict(report)
    row["config_hash"] = harness.config_digest(cfg, lc, fleet)
    out = _outdir(args)
    harness.write_table(os.path.join(out, "bounds.csv"), [row])
    harness.write_manifest(
        os.path.join(out, "manifest.txt"), cfg, lc, fleet,
        _manifest_args(args, ["seed", "plan"]),
    )
    print(f"wrote {out}/bounds.csv")
    return 0


def cmd_optimize(args) -> int:
    cfg, lc, fleet, _, _ = _resolve(args, need_data=False)
    scheme = Scheme(args.scheme)
    n = cfg.participants_per_round
    if scheme is Scheme.DIGITAL:
        alpha, _, _ = bounds.fleet_arrays(fleet)
        p = bounds.success_probabilities(cfg, fleet)
        result = optimize.optimize_inclusion_digital(alpha, p, n, args.tol)
    else:
        result = optimize.dinkelbach_analog(cfg, fleet, lc, n, args.tol)
    out = _outdir(args)
    digest = harness.config_digest(cfg, lc, fleet)
    prob_rows = [
        {
            "device": k,
            "weight": dev.weight,
            "distance_m": dev.distance_m,
            "inclusion_prob": float(result.probs[k]),
            "config_hash": digest,
        }
        for k, dev in enumerate(fleet)
    ]
    harness.write_table(os.path.join(out, "optimized_probs.csv"), prob_rows)
    summary = [
        {
            "scheme": scheme.value,
            "objective": result.objective,
            "iterations": result.iterations,
            "converged": result.converged,
            "trace": ";".join(repr(v) for v in result.trace),
            "config_hash": digest,
        }
    ]
    harness.write_table(os.path.join(out, "optimizer_summary.csv"), summary)
    harness.write_manifest(
        os.path.join(out, "manifest.txt"), cfg, lc, fleet,
        _manifest_args(args, ["seed", "scheme", "tol"]),
    )
    print(f"wrote {out}/optimized_probs.csv (objective {result.objective!r})")
    return 0


def cmd_sweep(args) -> int:
    cfg, lc, fleet, _, _ = _resolve(args, need_data=args.replications > 0)
    axis = SweepAxis(args.axis)
    grid = [float(v) for v in args.grid.split(",") if v.strip()]
    plan_kind = PlanKind.UNIFORM
    if args.plan not in (None, "optimized"):
        plan_kind = PlanKind(args.plan)
    rows = harness.sweep(
        cfg, fleet, lc, axis, grid,
        rounds=args.rounds, replications=args.replications,
        seed=args.seed, plan_kind=plan_kind,
    )
    out = _outdir(args)
    harness.write_table(os.path.join(out, "sweep.csv"), rows)
    harness.write_manifest(
        os.path.join(out, "manifest.txt"), cfg, lc, fleet,
        _manifest_args(args, ["seed", "axis", "grid", "rounds", "replications", "plan"]),
    )
    print(f"wrote {out}/sweep.csv ({len(rows)} rows)")
    return 0


def cmd_compare(args) -> int:
    cfg, lc, fleet, holdout, auto_eta = _resolve(args, need_data=True)
    n = cfg.participants_per_round
    plans = {
        "uniform": harness.baseline_plan(PlanKind.UNIFORM, fleet, n, cfg.pathloss_exponent),
        "learning": harness.baseline_plan(
            PlanKind.LEARNING_ORIENTED, fleet, n, cfg.pathloss_exponent
        ),
        "channel": harness.baseline_plan(
            PlanKind.CHANNEL_AWARE, fleet, n, cfg.pathloss_exponent
        ),
        "mindist": harness.baseline_plan(
            PlanKind.MIN_DISTORTION, fleet, n, cfg.pathloss_exponent
        ),
        "opt_digital": harness.optimized_plan(cfg, fleet, lc, Scheme.DIGITAL),
        "opt_analog": harness.optimized_plan(cfg, fleet, lc, Scheme.ANALOG),
    }
    if auto_eta:
        cfg = _tighten_eta(
            cfg, fleet, lc, list(plans.values()), [Scheme.DIGITAL, Scheme.ANALOG]
        )
        plans["opt_analog"] = harness.optimized_plan(cfg, fleet, lc, Scheme.ANALOG)
    _check(cfg, fleet, lc)
    rows = harness.compare_schemes(
        cfg, fleet, lc, plans, args.rounds, args.replications, args.seed, holdout=holdout
    )
    out = _outdir(args)
    harness.write_table(os.path.join(out, "compare.csv"), rows)
    harness.write_manifest(
        os.path.join(out, "manifest.txt"), cfg, lc, fleet,
        _manifest_args(args, ["seed", "rounds", "replications"]),
    )
    print(f"wrote {out}/compare.csv ({len(rows)} rows)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedlink",
        description="Federated learning over wireless uplinks: simulate, bound, optimize.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run Monte Carlo training rounds")
    _add_common(p)
    p.add_argument("--scheme", required=True, choices=["digital", "analog"])
    p.add_argument("--rounds", type=int, default=100)
    p.add_argument("--replications", type=int, default=5)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("bounds", help="evaluate the closed-form gap report")
    _add_common(p)
    p.set_defaults(fn=cmd_bounds)

    p = sub.add_parser("optimize", help="optimize inclusion probabilities")
    _add_common(p)
    p.add_argument("--scheme", required=True, choices=["digital", "analog"])
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(fn=cmd_optimize)

    p = sub.add_parser("sweep", help="bounds (and optional simulations) along one axis")
    _add_common(p)
    p.add_argument("--axis", required=True,
                   choices=[a.value for a in SweepAxis])
    p.add_argument("--grid", required=True, help="comma-separated grid values")
    p.add_argument("--rounds", type=int, default=0)
    p.add_argument("--replications", type=int, default=0)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("compare", help="both schemes under baseline and optimized plans")
    _add_common(p)
    p.add_argument("--rounds", type=int, default=100)
    p.add_argument("--replications", type=int, default=5)
    p.set_defaults(fn=cmd_compare)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
