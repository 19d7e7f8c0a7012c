"""Fading statistics, outage mechanics, precoding, and round estimators."""

import dataclasses
import math

import numpy as np
import pytest

import fedlink as fl
from fedlink import streams


def _arrays(draws):
    h = np.array([d.true_fading for d in draws])
    hh = np.array([d.est_fading for d in draws])
    return h, hh


class TestChannelDraws:
    def test_perfect_csi_equality(self):
        draws = fl.draw_channels(64, 1.0, streams.substream(7, 0))
        h, hh = _arrays(draws)
        np.testing.assert_allclose(h, hh, rtol=0, atol=1e-15)

    def test_correlation_moment(self):
        """Sample cross-correlation reproduces the configured coefficient."""
        rho = 0.6
        h, hh = _arrays(fl.draw_channels(100_000, rho, streams.substream(8, 0)))
        corr = np.mean(np.real(h * np.conj(hh)))
        assert abs(corr - rho) <= 0.01

    def test_unit_power(self):
        h, hh = _arrays(fl.draw_channels(100_000, 0.8, streams.substream(9, 0)))
        assert abs(np.mean(np.abs(h) ** 2) - 1.0) <= 0.02
        assert abs(np.mean(np.abs(hh) ** 2) - 1.0) <= 0.02

    def test_rejects_bad_correlation(self):
        with pytest.raises(ValueError):
            fl.draw_channels(3, 0.0, streams.substream(10, 0))


class TestRateThresholdAndOutage:
    def test_min_rate_param_uses_config(self, desk):
        cfg = desk.cfg
        expect = 2 ** (
            cfg.participants_per_round
            * cfg.model_dim
            * (cfg.quant_bits + 1)
            / (cfg.bandwidth_hz * cfg.delay_target_s)
        ) - 1
        assert fl.min_rate_param(cfg) == pytest.approx(expect, rel=1e-12)

    def test_success_probability_formula(self, desk):
        cfg = desk.cfg
        dev = desk.fleet[0]
        theta = fl.min_rate_param(cfg)
        expect = math.exp(
            -cfg.bandwidth_hz
            * cfg.noise_density_w_per_hz
            * theta
            / (2 * cfg.participants_per_round * cfg.power_budget_w * dev.distance_m**-3.0)
        )
        assert fl.success_probability(cfg, dev, theta, cfg.power_budget_w) == pytest.approx(expect)

    def test_empirical_outage_matches_probability(self, desk):
        """Delivered flags across digital rounds track the closed form within
        three binomial standard errors."""
        cfg, lc, fleet = desk.cfg, desk.lc, desk.fleet
        theta = fl.min_rate_param(cfg)
        probs = np.array(
            [fl.success_probability(cfg, d, theta, cfg.power_budget_w) for d in fleet]
        )
        w = np.zeros(cfg.model_dim)
        trials = 4000
        participation = np.zeros(len(fleet))
        deliveries = np.zeros(len(fleet))
        plan = desk.plan
        for m in range(trials):
            rng_s, rng_r = streams.round_streams(77, 0, m)
            parts = fl.sample_participants(plan, rng_s)
            est = fl.digital_round(w, fleet, parts, cfg, lc, rng_r)
            participation += est.participated
            deliveries += est.delivered
        freq = deliveries / np.maximum(participation, 1)
        se = np.sqrt(probs * (1 - probs) / np.maximum(participation, 1))
        assert np.all(np.abs(freq - probs) <= 3 * se + 1e-12)


class TestCompensationAndScaling:
    def test_lambda_values(self):
        assert fl.compensation_lambda(1.0, 1e-12) == pytest.approx(1.0, rel=1e-9)
        assert fl.compensation_lambda(0.5, math.log(2.0)) == pytest.approx(4.0, rel=1e-12)

    def test_lambda_makes_distortion_mean_one(self):
        """Monte Carlo mean of the realized analog coefficient equals one."""
        rho, gth = 0.7, 0.4
        lam = fl.compensation_lambda(rho, gth)
        h, hh = _arrays(fl.draw_channels(1_000_000, rho, streams.substream(11, 0)))
        power = np.abs(hh) ** 2
        xi = np.where(power >= gth, lam * np.real(np.conj(h) * hh) / power, 0.0)
        assert abs(xi.mean() - 1.0) <= 0.01

    def test_scaling_factor_single_device_closed_form(self, desk):
        lc = desk.lc
        cfg = dataclasses.replace(desk.cfg, csi_correlation=1.0, num_devices=1,
                                  participants_per_round=1, num_subbands=1)
        dev = fl.DeviceProfile(1.0, 1.0, 1.0)
        zeta = fl.scaling_factor(cfg, [dev], lc)
        gth = cfg.trunc_threshold
        expect = math.sqrt(cfg.power_budget_w * gth) / (lc.grad_bound * math.exp(gth))
        assert zeta == pytest.approx(expect, rel=1e-12)

    def test_scaling_halves_when_gain_quarters(self, desk):
        """Scaling the attenuation d^(a/2) up by two halves the factor."""
        cfg, lc = desk.cfg, desk.lc
        stretched = [
            dataclasses.replace(d, distance_m=d.distance_m * 2 ** (2.0 / 3.0))
            for d in desk.fleet
        ]
        ratio = fl.scaling_factor(cfg, stretched, lc) / fl.scaling_factor(cfg, desk.fleet, lc)
        assert ratio == pytest.approx(0.5, rel=1e-12)

    def test_average_mode_uses_expected_inverse_power(self, desk):
        cfg_max = desk.cfg
        cfg_ave = dataclasses.replace(cfg_max, power_mode=fl.PowerMode.AVERAGE)
        z_max = fl.scaling_factor(cfg_max, desk.fleet, desk.lc)
        z_ave = fl.scaling_factor(cfg_ave, desk.fleet, desk.lc)
        # average mode admits a strictly larger scaling at the same budget
        assert z_ave > z_max


class TestPrecoder:
    def test_truncation_branch(self, desk):
        draw = fl.ChannelDraw(0.1 + 0.1j, 0.2 + 0.1j)  # |est|^2 = 0.05 < 0.5
        beta = fl.analog_precoder(draw, desk.fleet[0], 1.5, 0.01, 0.5, 3.0)
        assert beta == 0j

    def test_pre_equalization_identity(self, desk):
        """Active devices satisfy beta * h_est * d^(-a/2) = zeta lam w/r."""
        dev = desk.fleet[2]
        est = 0.9 - 0.4j
        draw = fl.ChannelDraw(est, est)
        lam, zeta, gth = 2.0, 0.05, 0.5
        beta = fl.analog_precoder(draw, dev, lam, zeta, gth, 3.0)
        combined = beta * est * dev.distance_m ** (-1.5)
        expect = zeta * lam * dev.weight / dev.inclusion_prob
        assert combined == pytest.approx(expect, rel=1e-12)
        assert combined.imag == pytest.approx(0.0, abs=1e-15)

    def test_threshold_boundary_is_active(self, desk):
        gth = 0.25
        est = complex(0.5, 0.0)  # |est|^2 equals the threshold exactly
        beta = fl.analog_precoder(fl.ChannelDraw(est, est), desk.fleet[0], 1.0, 0.01, gth, 3.0)
        assert beta != 0j
        assert beta.real > 0


class TestDigitalRound:
    def test_ideal_channel_recovers_global_gradient(self, desk):
        """Loose delay, fine quantizer, full participation: the round output
        reproduces the exact aggregate."""
        cfg = dataclasses.replace(
            desk.cfg,
            delay_target_s=1e9,
            quant_bits=32,
            participants_per_round=desk.cfg.num_devices,
            num_subbands=desk.cfg.num_devices,
        )
        fleet = [dataclasses.replace(d, inclusion_prob=1.0) for d in desk.fleet]
        w = np.full(cfg.model_dim, 0.2)
        est = fl.digital_round(w, fleet, range(len(fleet)), cfg, desk.lc, streams.substream(12, 0))
        grads = [fl.local_gradient(w, d.dataset, desk.lc) for d in fleet]
        target = fl.global_gradient(grads, desk.weights)
        assert est.delivered.all()
        np.testing.assert_allclose(est.vector, target, rtol=0, atol=1e-6)

    def test_total_outage_returns_zero_vector(self, desk):
        """A hopeless rate target silences every delivery."""
        cfg = dataclasses.replace(desk.cfg, delay_target_s=desk.cfg.delay_target_s / 50)
        w = np.zeros(cfg.model_dim)
        est = fl.digital_round(
            w, desk.fleet, range(cfg.participants_per_round),
            cfg, desk.lc, streams.substream(13, 0),
        )
        assert not est.delivered.any()
        np.testing.assert_array_equal(est.vector, np.zeros(cfg.model_dim))

    def test_round_delay_matches_target_at_minimal_rate(self, desk):
        w = np.zeros(desk.cfg.model_dim)
        rng_s, rng_r = streams.round_streams(14, 0, 0)
        parts = fl.sample_participants(desk.plan, rng_s)
        est = fl.digital_round(w, desk.fleet, parts, desk.cfg, desk.lc, rng_r)
        assert est.round_delay_s == pytest.approx(desk.cfg.delay_target_s, rel=1e-9)
        assert est.scheme is fl.Scheme.DIGITAL

    def test_rejects_wrong_participant_count(self, desk):
        with pytest.raises(ValueError):
            fl.digital_round(
                np.zeros(desk.cfg.model_dim), desk.fleet, [0, 1],
                desk.cfg, desk.lc, streams.substream(15, 0),
            )

    def test_monte_carlo_unbiasedness(self, desk):
        """Round-level mean over sampling, outage, and quantization converges
        to the true aggregate within four standard errors."""
        cfg, lc, fleet, plan = desk.cfg, desk.lc, desk.fleet, desk.plan
        w = np.full(cfg.model_dim, -0.1)
        grads = [fl.local_gradient(w, d.dataset, lc) for d in fleet]
        target = fl.global_gradient(grads, desk.weights)
        trials = 4000
        acc = np.zeros(cfg.model_dim)
        acc_sq = np.zeros(cfg.model_dim)
        for m in range(trials):
            rng_s, rng_r = streams.round_streams(16, 0, m)
            parts = fl.sample_participants(plan, rng_s)
            v = fl.digital_round(w, fleet, parts, cfg, lc, rng_r).vector
            acc += v
            acc_sq += v**2
        mean = acc / trials
        se = np.sqrt((acc_sq / trials - mean**2) / trials)
        assert np.all(np.abs(mean - target) <= 4 * se)


class TestAnalogRound:
    def test_perfect_inversion_recovers_global_gradient(self, desk):
        """Perfect CSI, negligible truncation and noise, full inclusion."""
        cfg = dataclasses.replace(
            desk.cfg,
            csi_correlation=1.0,
            trunc_threshold=1e-12,
            noise_density_w_per_hz=1e-300,
            participants_per_round=desk.cfg.num_devices,
            num_subbands=desk.cfg.num_devices,
        )
        fleet = [dataclasses.replace(d, inclusion_prob=1.0) for d in desk.fleet]
        w = np.full(cfg.model_dim, 0.15)
        est = fl.analog_round(w, fleet, range(len(fleet)), cfg, desk.lc, streams.substream(17, 0))
        grads = [fl.local_gradient(w, d.dataset, desk.lc) for d in fleet]
        target = fl.global_gradient(grads, desk.weights)
        assert est.delivered.all()
        np.testing.assert_allclose(est.vector, target, rtol=1e-9, atol=1e-12)

    def test_total_truncation_leaves_pure_noise(self, desk):
        """An unreachable threshold silences everyone; the output is receiver
        noise with the physical per-round energy d*B*N0/(2 zeta^2)."""
        cfg = dataclasses.replace(desk.cfg, trunc_threshold=50.0)
        zeta = fl.scaling_factor(cfg, desk.fleet, desk.lc)
        w = np.zeros(cfg.model_dim)
        energy = 0.0
        trials = 2000
        for m in range(trials):
            rng_s, rng_r = streams.round_streams(18, 0, m)
            parts = fl.sample_participants(desk.plan, rng_s)
            est = fl.analog_round(w, desk.fleet, parts, cfg, desk.lc, rng_r)
            assert not est.delivered.any()
            energy += float(np.sum(est.vector**2))
        expect = cfg.model_dim * cfg.bandwidth_hz * cfg.noise_density_w_per_hz / (2 * zeta**2)
        assert energy / trials == pytest.approx(expect, rel=0.1)

    def test_round_delay_is_constant(self, desk):
        rng_s, rng_r = streams.round_streams(19, 0, 0)
        parts = fl.sample_participants(desk.plan, rng_s)
        est = fl.analog_round(np.zeros(desk.cfg.model_dim), desk.fleet, parts, desk.cfg, desk.lc, rng_r)
        assert est.round_delay_s == pytest.approx(
            desk.cfg.model_dim * desk.cfg.num_subbands / desk.cfg.bandwidth_hz
        )
        assert est.scheme is fl.Scheme.ANALOG

    def test_monte_carlo_unbiasedness(self, desk):
        cfg, lc, fleet, plan = desk.cfg, desk.lc, desk.fleet, desk.plan
        w = np.full(cfg.model_dim, -0.1)
        grads = [fl.local_gradient(w, d.dataset, lc) for d in fleet]
        target = fl.global_gradient(grads, desk.weights)
        trials = 4000
        acc = np.zeros(cfg.model_dim)
        acc_sq = np.zeros(cfg.model_dim)
        for m in range(trials):
            rng_s, rng_r = streams.round_streams(20, 0, m)
            parts = fl.sample_participants(plan, rng_s)
            v = fl.analog_round(w, fleet, parts, cfg, lc, rng_r).vector
            acc += v
            acc_sq += v**2
        mean = acc / trials
        se = np.sqrt((acc_sq / trials - mean**2) / trials)
        assert np.all(np.abs(mean - target) <= 4 * se)


class TestPowerConstraints:
    def test_max_mode_never_exceeds_budget(self, desk):
        """Per-draw transmit energy respects the cap on every admissible draw."""
        cfg, lc = desk.cfg, desk.lc
        lam = fl.compensation_lambda(cfg.csi_correlation, cfg.trunc_threshold)
        zeta = fl.scaling_factor(cfg, desk.fleet, lc)
        w = np.full(cfg.model_dim, 0.4)
        grads = [fl.local_gradient(w, d.dataset, lc) for d in desk.fleet]
        rng = streams.substream(21, 0)
        for _ in range(2000):
            draws = fl.draw_channels(len(desk.fleet), cfg.csi_correlation, rng)
            for k, dev in enumerate(desk.fleet):
                beta = fl.analog_precoder(
                    draws[k], dev, lam, zeta, cfg.trunc_threshold, cfg.pathloss_exponent
                )
                energy = abs(beta) ** 2 * float(grads[k] @ grads[k])
                assert energy <= cfg.power_budget_w * (1 + 1e-12)

    def test_average_mode_mean_energy_within_budget(self, desk):
        cfg = dataclasses.replace(desk.cfg, power_mode=fl.PowerMode.AVERAGE)
        lc = desk.lc
        lam = fl.compensation_lambda(cfg.csi_correlation, cfg.trunc_threshold)
        zeta = fl.scaling_factor(cfg, desk.fleet, lc)
        w = np.full(cfg.model_dim, 0.4)
        grads = [fl.local_gradient(w, d.dataset, lc) for d in desk.fleet]
        rng = streams.substream(22, 0)
        trials = 3000
        energies = np.zeros((trials, len(desk.fleet)))
        for t in range(trials):
            draws = fl.draw_channels(len(desk.fleet), cfg.csi_correlation, rng)
            for k, dev in enumerate(desk.fleet):
                beta = fl.analog_precoder(
                    draws[k], dev, lam, zeta, cfg.trunc_threshold, cfg.pathloss_exponent
                )
                energies[t, k] = abs(beta) ** 2 * float(grads[k] @ grads[k])
        mean = energies.mean(axis=0)
        se = energies.std(axis=0, ddof=1) / math.sqrt(trials)
        assert np.all(mean <= cfg.power_budget_w + 2 * se)


class TestDistortionMoments:
    def test_limit_values(self):
        assert fl.distortion_second_moment(1.0, 1e-9, 1.0) == pytest.approx(0.0, abs=1e-6)
        gth = 0.8
        assert fl.distortion_second_moment(1.0, gth, 0.5) == pytest.approx(
            math.exp(gth) / 0.5 - 1.0, rel=1e-12
        )

    def test_monte_carlo_moment_match(self):
        """Realized coefficient second moment matches the closed form within 1%."""
        rho, gth, r = 0.8, 0.5, 0.5
        lam = fl.compensation_lambda(rho, gth)
        h, hh = _arrays(fl.draw_channels(1_000_000, rho, streams.substream(23, 0)))
        power = np.abs(hh) ** 2
        xi = np.where(power >= gth, lam * np.real(np.conj(h) * hh) / power, 0.0)
        chi = streams.substream(24, 0).random(xi.size) < r
        emp = np.mean((chi * xi / r - 1.0) ** 2)
        expect = fl.distortion_second_moment(rho, gth, r)
        assert emp == pytest.approx(expect, rel=0.01)

    def test_rejects_bad_inclusion(self):
        with pytest.raises(ValueError):
            fl.distortion_second_moment(0.9, 0.5, 0.0)