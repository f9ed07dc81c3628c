import numpy as np
import pytest

from ncstab.channel import DelayChannelSpec, statistics_from_spec
from ncstab.errors import DomainError, StabilityError
from ncstab.mcsim import (SimConfig, estimate_cross_correlation, sample_delays, simulate_loop,
                          trial_generators)
from ncstab.msstab import LoopDescription, ms_stability_test
from ncstab.sysrep import StateSpace

LAM = 1.5
PLANT = StateSpace.from_scalar_tf([0.0, 1.0], [1.0, -LAM])
DIAG2 = StateSpace(np.diag([LAM, 1.2]), np.eye(2), np.eye(2), np.zeros((2, 2)))


def siso(spec, k=1.2, noise=None):
    return LoopDescription(PLANT, StateSpace.static([[k]]), [statistics_from_spec(spec)], noise)


def two_dropouts(p=(0.2, 0.3), order=(0, 1)):
    specs = [DelayChannelSpec.dropout(p[i]) for i in order]
    k = StateSpace.static(np.diag([1.2, 1.0]))
    lp = LoopDescription(DIAG2, k, [statistics_from_spec(s) for s in specs])
    return lp, specs


def test_config_validation():
    with pytest.raises(DomainError):
        SimConfig(trials=0)
    with pytest.raises(DomainError):
        SimConfig(steps=10, burn_in=10)
    with pytest.raises(DomainError):
        SimConfig(jobs=0)


def test_sample_delays_maps_pmf_and_loss():
    spec = DelayChannelSpec((0.5, 0.3))
    got = sample_delays(spec, np.array([0.0, 0.49, 0.5, 0.79, 0.8, 0.99]))
    assert got.tolist() == [0, 0, 1, 1, -1, -1]


def test_trial_streams_are_indexed_children():
    full = trial_generators(7, 4)
    part = trial_generators(7, 4, [2, 3])
    assert np.array_equal(full[2].random(5), part[0].random(5))
    assert np.array_equal(full[3].random(5), part[1].random(5))


def test_seed_determinism():
    spec = DelayChannelSpec.dropout(0.3)
    cfg = SimConfig(steps=3000, trials=3, seed=11)
    a = simulate_loop(siso(spec), [spec], cfg)
    b = simulate_loop(siso(spec), [spec], cfg)
    assert a.to_dict() == b.to_dict()
    c = simulate_loop(siso(spec), [spec], SimConfig(steps=3000, trials=3, seed=12))
    assert c.empirical_powers[0] != a.empirical_powers[0]


def test_parallel_trials_match_serial_bitwise():
    lp, specs = two_dropouts()
    serial = simulate_loop(lp, specs, SimConfig(steps=2000, trials=5, seed=3, record_xcorr=True))
    par = simulate_loop(lp, specs, SimConfig(steps=2000, trials=5, seed=3, record_xcorr=True,
                                             jobs=3))
    assert serial.to_dict() == par.to_dict()


def test_perfect_channel_matches_lti_prediction():
    spec = DelayChannelSpec((1.0,))
    lp = siso(spec, noise=[1.0])
    pred = ms_stability_test(lp).powers
    rep = simulate_loop(lp, [spec], SimConfig(steps=20000, trials=8, seed=0))
    assert not rep.diverged
    assert np.all(np.abs(rep.empirical_powers - pred) <= 3 * rep.power_se)


def test_dropout_above_threshold_diverges():
    spec = DelayChannelSpec.dropout(0.6)
    lp = siso(spec, k=2.5)
    assert ms_stability_test(lp).nominal_stable and not ms_stability_test(lp).ms_stable
    rep = simulate_loop(lp, [spec], SimConfig(steps=5000, trials=4, seed=0))
    assert rep.diverged and rep.diverged_trials == 4
    finite = rep.window_powers[~np.isnan(rep.window_powers[:, 0]), 0]
    assert finite.size >= 2 and finite[-1] > 1e3 * finite[0]
    assert rep.to_dict()["diverged"] is True


def test_nominally_unstable_loop_needs_override():
    spec = DelayChannelSpec.dropout(0.3)
    lp = siso(spec, k=0.1)
    with pytest.raises(StabilityError):
        simulate_loop(lp, [spec], SimConfig(steps=200, trials=2))
    rep = simulate_loop(lp, [spec], SimConfig(steps=200, trials=2, allow_unstable=True))
    assert rep.diverged


def test_independent_channels_are_uncorrelated():
    lp, specs = two_dropouts()
    rep = simulate_loop(lp, specs, SimConfig(steps=20000, trials=10, seed=5, record_xcorr=True))
    xc, se = rep.cross_corr, rep.cross_corr_se
    assert xc.shape == (11, 2, 2)
    assert np.all(np.abs(xc[:, 0, 1]) <= 4 * se[:, 0, 1])
    assert np.all(np.abs(xc[:, 1, 0]) <= 4 * se[:, 1, 0])
    assert np.allclose(xc[5, [0, 1], [0, 1]], 1.0)


def test_single_channel_has_no_off_diagonal_pairs():
    spec = DelayChannelSpec.dropout(0.3)
    rep = simulate_loop(siso(spec), [spec], SimConfig(steps=2000, trials=2, record_xcorr=True))
    xc = rep.cross_corr
    assert xc.shape == (11, 1, 1)
    assert np.isclose(xc[5, 0, 0], 1.0)


def test_permuted_channels_give_permuted_statistics():
    lp, specs = two_dropouts()
    a = simulate_loop(lp, specs, SimConfig(steps=20000, trials=10, seed=9))
    perm = lp.permuted([1, 0])
    b = simulate_loop(perm, specs[::-1], SimConfig(steps=20000, trials=10, seed=9))
    se = np.hypot(a.power_se, b.power_se[::-1])
    assert np.all(np.abs(a.empirical_powers - b.empirical_powers[::-1]) <= 4 * se)


def test_cross_correlation_of_white_noise():
    rng = np.random.default_rng(0)
    d = rng.standard_normal((6, 5000, 2))
    corr, se = estimate_cross_correlation(d, max_lag=3)
    assert corr.shape == (7, 2, 2)
    assert np.all(np.abs(corr[:, 0, 1]) <= 4 * se[:, 0, 1])


def test_trajectory_dump(tmp_path):
    spec = DelayChannelSpec.dropout(0.3)
    path = tmp_path / "traj.txt"
    simulate_loop(siso(spec), [spec], SimConfig(steps=50, trials=2, trajectory_path=str(path)))
    lines = path.read_text().splitlines()
    assert lines[0] == "# k u_1 y_1 chi_1 diverged"
    rows = np.loadtxt(path)
    assert rows.shape == (50, 5)
    assert rows[:, 0].tolist() == list(range(50))
    assert set(rows[:, 3]) <= {0.0, -1.0}
