"""Shared fixtures: small synthetic fleets with measured learning constants.

Everything here is deterministic; statistical tests downstream use their own
fixed stream seeds.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import pytest

import fedlink as fl


@dataclasses.dataclass(frozen=True, eq=False)
class Fixture:
    cfg: fl.SystemConfig
    lc: fl.LearningConstants
    fleet: list
    data: list
    weights: np.ndarray

    @property
    def plan(self) -> fl.SamplingPlan:
        probs = np.array([d.inclusion_prob for d in self.fleet])
        return fl.SamplingPlan(probs, self.cfg.participants_per_round)


def build_fixture(
    *,
    K=10,
    N=5,
    M=10,
    feature_dim=7,
    data_seed=11,
    size_sigma=0.3,
    geometry_seed=4,
    dist_range=(10.0, 60.0),
    power_w=0.3,
    quant_bits=6,
    trunc_threshold=0.5,
    csi_correlation=0.9,
    learning_rate=0.0015,
    reg=2.0,
    delay_slack=2.0,
) -> Fixture:
    data = fl.gen_synthetic_fleet(K, 2, data_seed, feature_dim=feature_dim, size_sigma=size_sigma)
    weights = fl.fleet_weights(data)
    lc = fl.estimate_constants(data, probe_models=10, seed=3, reg=reg)
    d_model = data[0].model_dim
    rng = np.random.default_rng(geometry_seed)
    dists = rng.uniform(dist_range[0], dist_range[1], K)
    cfg = fl.SystemConfig(
        bandwidth_hz=1e6,
        noise_density_w_per_hz=1e-11,
        pathloss_exponent=3.0,
        power_budget_w=power_w,
        delay_target_s=delay_slack * d_model * M / 1e6,
        num_subbands=M,
        quant_bits=quant_bits,
        trunc_threshold=trunc_threshold,
        csi_correlation=csi_correlation,
        learning_rate=learning_rate,
        model_dim=d_model,
        participants_per_round=N,
        num_devices=K,
    )
    fleet = [
        fl.DeviceProfile(float(weights[k]), float(dists[k]), N / K, data[k])
        for k in range(K)
    ]
    return Fixture(cfg, lc, fleet, data, weights)


@pytest.fixture(scope="session")
def desk() -> Fixture:
    """K=10, 8-dimensional model, heterogeneous channel, feasible rates."""
    return build_fixture()


@pytest.fixture(scope="session")
def tiny() -> Fixture:
    """K=3 fixture for grid-search oracles."""
    fix = build_fixture(
        K=3, N=2, data_seed=5, geometry_seed=8, dist_range=(15.0, 45.0),
        power_w=0.5, csi_correlation=0.8, learning_rate=0.0005,
    )
    return fix


@pytest.fixture(scope="session")
def f_star(desk: Fixture) -> float:
    w = fl.solve_global_optimum(desk.data, desk.weights, desk.lc, 1e-10)
    return fl.global_loss(w, desk.data, desk.weights, desk.lc)
