import numpy as np
import pytest

from fubini_sde import (Grids, ThetaProcess, density_process, generate_epi_brownian, novikov_estimate,
                        shifted_process, verify_girsanov)
from fubini_sde.girsanov import InsufficientEffectiveSample


def test_theta_validation():
    with pytest.raises(ValueError):
        ThetaProcess("quadratic")
    with pytest.raises(ValueError):
        ThetaProcess("constant", c=np.inf)
    assert ThetaProcess().is_zero
    assert not ThetaProcess("adapted_linear", kappa=0.1).is_zero
    assert ThetaProcess.from_spec({"kind": "time_function", "c": 1.0, "slope": 2.0}).integrated_mean(1.0) == 2.0


def test_zero_theta_unit_weights(small_noise):
    dens = density_process(small_noise, ThetaProcess())
    assert np.all(dens.log_density == 0.0)
    assert np.all(dens.density() == 1.0)
    W = shifted_process(small_noise, ThetaProcess())
    np.testing.assert_array_equal(W.values, small_noise.levels())
    nov = novikov_estimate(small_noise, ThetaProcess())
    assert nov["estimate"] == 1.0 and not nov["heavy_tail"]


def test_constant_theta_telescopes(small_noise):
    c, T = 0.8, 1.0
    dens = density_process(small_noise, ThetaProcess(c=c))
    B_T = small_noise.level_at(64)
    np.testing.assert_allclose(dens.log_at(), c * B_T - 0.5 * c * c * T, rtol=0, atol=1e-12)
    W = shifted_process(small_noise, ThetaProcess(c=c))
    np.testing.assert_allclose(W.at(64), B_T - c * T, rtol=0, atol=1e-12)


def test_density_martingale_mean():
    noise = generate_epi_brownian(Grids.make(1.0, 16, 100), 1000, seed=44)
    dens = density_process(noise, ThetaProcess(c=1.0))
    for k in (4, 8, 16):
        e = dens.density(k).ravel()
        assert abs(e.mean() - 1.0) <= 4 * e.std(ddof=1) / np.sqrt(e.size)
        assert dens.pooled_mean(k) == pytest.approx(e.mean(), rel=1e-12)
    assert np.all(dens.density() > 0)
    w = dens.normalized()
    assert w.sum() == pytest.approx(1.0)


def test_adapted_martingale_mean():
    noise = generate_epi_brownian(Grids.make(1.0, 32, 50), 2000, seed=45)
    dens = density_process(noise, ThetaProcess("adapted_linear", kappa=0.5))
    e = dens.density().ravel()
    assert abs(e.mean() - 1.0) <= 4 * e.std(ddof=1) / np.sqrt(e.size)


def test_adapted_shift_brute_force(small_noise):
    kappa = 0.3
    W = shifted_process(small_noise, ThetaProcess("adapted_linear", kappa=kappa))
    dt = small_noise.grids.time.dt
    dB = small_noise.dB
    i, m = 5, 17
    level, drift = 0.0, 0.0
    for k in range(64):
        drift += kappa * level * dt
        level += dB[i, m, k]
    assert abs(W.at(64)[i, m] - (level - drift)) <= 1e-14 * max(1.0, abs(level))


def test_left_endpoint_log_density(small_noise):
    kappa = 0.4
    dens = density_process(small_noise, ThetaProcess("adapted_linear", kappa=kappa))
    dt = small_noise.grids.time.dt
    i, m = 3, 9
    level, log_e = 0.0, 0.0
    for k in range(64):
        th = kappa * level
        log_e += th * small_noise.dB[i, m, k] - 0.5 * th * th * dt
        level += small_noise.dB[i, m, k]
    assert dens.log_at()[i, m] == pytest.approx(log_e, abs=1e-13)


@pytest.mark.parametrize("c", [0.5, 1.0])
def test_novikov_constant(small_noise, c):
    nov = novikov_estimate(small_noise, ThetaProcess(c=c))
    assert nov["estimate"] == pytest.approx(np.exp(c * c), rel=1e-12)
    assert nov["closed_form"] == pytest.approx(np.exp(c * c))


def test_novikov_closed_forms():
    assert ThetaProcess("adapted_linear", kappa=0.5).novikov_closed_form(1.0) == pytest.approx(
        np.cos(np.sqrt(2) * 0.5) ** -0.5)
    assert ThetaProcess("adapted_linear", kappa=1.2).novikov_closed_form(1.0) == float("inf")
    # time_function: integral of (c + s t)^2 over [0, 1] for c = 1, s = 1 is 7/3
    assert ThetaProcess("time_function", c=1.0, slope=1.0).novikov_closed_form(1.0) == pytest.approx(np.exp(7 / 3))


def test_novikov_heavy_tail_flag():
    noise = generate_epi_brownian(Grids.make(1.0, 64, 20), 500, seed=3)
    nov = novikov_estimate(noise, ThetaProcess("adapted_linear", kappa=3.0))
    assert nov["heavy_tail"] and nov["closed_form"] is None
    mild = novikov_estimate(noise, ThetaProcess("adapted_linear", kappa=0.3))
    assert not mild["heavy_tail"]


def test_verify_zero_theta_trivial():
    noise = generate_epi_brownian(Grids.make(1.0, 32, 32), 2000, seed=6)
    rep = verify_girsanov(noise, ThetaProcess())
    assert rep["pass"] and rep["weights_uniform"]
    assert rep["effective_sample_size"]["pooled"] == pytest.approx(32 * 2000)


def test_verify_insufficient_sample():
    noise = generate_epi_brownian(Grids.make(1.0, 16, 4), 100, seed=6)
    with pytest.raises(InsufficientEffectiveSample):
        verify_girsanov(noise, ThetaProcess(c=0.5))


def test_verify_detects_wrong_weights():
    # without reweighting, W_T is N(-c T, T), which the pooled KS must reject
    noise = generate_epi_brownian(Grids.make(1.0, 32, 32), 2000, seed=6)
    W = shifted_process(noise, ThetaProcess(c=0.5))
    from fubini_sde import ks_test_normal
    assert ks_test_normal(W.pooled(32), 0.0, 1.0).p_value < 1e-6


def test_path_marginal_exclusion(small_noise):
    dens = density_process(small_noise, ThetaProcess(c=0.5))
    full = dens.path_marginal()
    np.testing.assert_allclose(full, dens.density().mean(axis=0), rtol=1e-12)
    loo = dens.path_marginal(exclude=(0,))
    np.testing.assert_allclose(loo, dens.density()[1:].mean(axis=0), rtol=1e-12)
