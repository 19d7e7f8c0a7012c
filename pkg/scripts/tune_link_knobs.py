#!/usr/bin/env python3
"""Search the discrete link knobs: quantization width for the digital scheme
and truncation threshold for the analog scheme, at several CSI accuracies.

Usage: python scripts/tune_link_knobs.py [outdir]
"""

import dataclasses
import pathlib
import sys

import numpy as np

import fedlink as fl
from fedlink import bounds as B


def main(outdir="results/link_knobs"):
    out = pathlib.Path(outdir)
    out.mkdir(parents=True, exist_ok=True)

    K, N, M = 10, 5, 10
    data = fl.gen_synthetic_fleet(K, 2, seed=11, size_sigma=0.3)
    weights = fl.fleet_weights(data)
    lc = fl.estimate_constants(data, probe_models=10, seed=3, reg=2.0)
    d_model = data[0].model_dim
    dists = np.random.default_rng(4).uniform(10, 60, K)
    cfg = fl.SystemConfig(
        bandwidth_hz=1e6, noise_density_w_per_hz=1e-11, pathloss_exponent=3.0,
        power_budget_w=30.0, delay_target_s=2 * d_model * M / 1e6, num_subbands=M,
        quant_bits=6, trunc_threshold=0.5, csi_correlation=0.9,
        learning_rate=0.0005, model_dim=d_model, participants_per_round=N,
        num_devices=K,
    )
    fleet = [fl.DeviceProfile(float(weights[k]), float(dists[k]), N / K, data[k]) for k in range(K)]

    table = B.gap_digital_vs_bits(cfg, fleet, lc, range(1, 17))
    rows = [
        {"quant_bits": b, "gap_digital": gap,
         "config_hash": fl.config_digest(cfg, lc, fleet)}
        for b, gap in table
    ]
    fl.write_table(out / "bits_table.csv", rows)
    best_b = fl.search_quantization_bits(cfg, fleet, lc, 16)
    print(f"best quantization width: {best_b} bits")

    grid = [round(0.02 * i, 2) for i in range(1, 101)]
    thr_rows = []
    for rho in (0.5, 0.7, 0.9, 0.95):
        cfg_r = dataclasses.replace(cfg, csi_correlation=rho)
        best = fl.search_truncation_threshold(cfg_r, fleet, lc, grid)
        thr_rows.append({"csi_correlation": rho, "best_threshold": best,
                         "config_hash": fl.config_digest(cfg, lc, fleet)})
        print(f"csi correlation {rho}: best truncation threshold {best}")
    fl.write_table(out / "threshold_table.csv", thr_rows)
    fl.write_manifest(out / "manifest.txt", cfg, lc, fleet, {})
    print(f"wrote {out}/bits_table.csv and {out}/threshold_table.csv")


if __name__ == "__main__":
    main(*sys.argv[1:])
