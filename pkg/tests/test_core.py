"""Configuration types, feasibility validation, and config-file round trips."""

import dataclasses

import pytest

import fedlink as fl
from fedlink.core import learning_rate_limit


def _mini_fleet(K, N):
    return [fl.DeviceProfile(1.0 / K, 20.0, N / K) for _ in range(K)]


def _mini_cfg(**over):
    base = dict(
        bandwidth_hz=1e6,
        noise_density_w_per_hz=1e-11,
        pathloss_exponent=3.0,
        power_budget_w=0.5,
        delay_target_s=2e-4,
        num_subbands=10,
        quant_bits=6,
        trunc_threshold=0.5,
        csi_correlation=0.9,
        learning_rate=1e-4,
        model_dim=8,
        participants_per_round=10,
        num_devices=20,
    )
    base.update(over)
    return fl.SystemConfig(**base)


LC = fl.LearningConstants(
    strong_convexity=2.0,
    smoothness=8.0,
    grad_bound=10.0,
    local_global_distance=0.5,
    quant_range_sq=50.0,
)


class TestUnits:
    def test_dbm_round_trip(self):
        assert fl.dbm_to_watts(0.0) == pytest.approx(1e-3)
        assert fl.dbm_to_watts(30.0) == pytest.approx(1.0)
        assert fl.watts_to_dbm(fl.dbm_to_watts(-80.0)) == pytest.approx(-80.0)

    def test_watts_to_dbm_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            fl.watts_to_dbm(0.0)


class TestValidation:
    def test_satisfied_by_construction(self):
        report = fl.validate_config(_mini_cfg(), _mini_fleet(20, 10), LC)
        assert report.ok and bool(report)

    def test_probability_sum_violation(self):
        fleet = _mini_fleet(20, 10)
        fleet[0] = dataclasses.replace(fleet[0], inclusion_prob=0.25)
        report = fl.validate_config(_mini_cfg(), fleet, LC)
        assert not report.ok
        assert any("sum to participants_per_round" in v for v in report.violations)

    def test_learning_rate_boundary_case(self):
        cfg = _mini_cfg()
        fleet = _mini_fleet(20, 10)
        g = fl.core.digital_virtual_weight(cfg, fleet)
        at_limit = learning_rate_limit(LC, g) + 1e-6
        report = fl.validate_config(
            dataclasses.replace(cfg, learning_rate=at_limit), fleet, LC, fl.Scheme.DIGITAL
        )
        assert not report.ok
        assert any("digital stability" in v for v in report.violations)

    def test_participants_vs_subbands(self):
        report = fl.validate_config(
            _mini_cfg(num_subbands=4), _mini_fleet(20, 10), LC
        )
        assert any("num_subbands" in v for v in report.violations)

    def test_delay_below_analog_round(self):
        report = fl.validate_config(
            _mini_cfg(delay_target_s=1e-6), _mini_fleet(20, 10), LC
        )
        assert any("analog round delay" in v for v in report.violations)

    def test_weight_sum_violation(self):
        fleet = _mini_fleet(20, 10)
        fleet[3] = dataclasses.replace(fleet[3], weight=0.5)
        report = fl.validate_config(_mini_cfg(), fleet, LC)
        assert any("weights must sum to 1" in v for v in report.violations)

    def test_idempotent(self):
        cfg, fleet = _mini_cfg(), _mini_fleet(20, 10)
        first = fl.validate_config(cfg, fleet, LC)
        second = fl.validate_config(cfg, fleet, LC)
        assert first.violations == second.violations

    def test_mu_above_l_rejected(self):
        bad = dataclasses.replace(LC, strong_convexity=9.0)
        report = fl.validate_config(_mini_cfg(), _mini_fleet(20, 10), bad)
        assert any("cannot exceed smoothness" in v for v in report.violations)


class TestConfigFile:
    def test_round_trip_exact(self, tmp_path):
        cfg = _mini_cfg(power_mode=fl.PowerMode.AVERAGE)
        fleet = [
            fl.DeviceProfile(0.25, 12.5, 0.5),
            fl.DeviceProfile(0.75, 33.125, 0.5),
        ]
        cfg = dataclasses.replace(cfg, num_devices=2, participants_per_round=1)
        path = tmp_path / "run.cfg"
        fl.write_config_file(path, cfg, LC, fleet)
        cfg2, lc2, fleet2 = fl.read_config_file(path)
        assert cfg2 == cfg
        assert lc2 == LC
        assert [(d.weight, d.distance_m, d.inclusion_prob) for d in fleet2] == [
            (0.25, 12.5, 0.5),
            (0.75, 33.125, 0.5),
        ]

    def test_digest_stable_and_sensitive(self):
        cfg, fleet = _mini_cfg(), _mini_fleet(4, 10)
        a = fl.config_digest(cfg, LC, fleet)
        b = fl.config_digest(cfg, LC, fleet)
        c = fl.config_digest(dataclasses.replace(cfg, quant_bits=7), LC, fleet)
        assert a == b
        assert a != c

    def test_comments_and_spacing_ignored(self):
        text = fl.format_config(_mini_cfg(), LC, _mini_fleet(1, 10))
        noisy = "# header\n\n" + text.replace("=", "  =  ") + "\n# trailer\n"
        cfg, lc, fleet = fl.parse_config_text(noisy)
        assert cfg == _mini_cfg()

    def test_missing_key_reported(self):
        text = fl.format_config(_mini_cfg(), LC, [])
        broken = "\n".join(
            ln for ln in text.splitlines() if not ln.startswith("system.bandwidth_hz")
        )
        with pytest.raises(ValueError, match="bandwidth_hz"):
            fl.parse_config_text(broken)

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown system key"):
            fl.parse_config_text("system.frobnicator = 3\n")