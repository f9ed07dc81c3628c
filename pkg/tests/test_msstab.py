import numpy as np
import pytest

from ncstab.channel import DelayChannelSpec, statistics_from_spec
from ncstab.errors import DimensionError, DomainError, SingularityError
from ncstab.msstab import (LoopDescription, build_complementary_sensitivity, input_sensitivity,
                           ms_stability_test, stationary_powers)
from ncstab.synthesis import ExampleFamily, GeneralMP, synthesize_controller
from ncstab.sysrep import StateSpace, freq_distance, unit_circle_grid

LAM = 1.5
PLANT = StateSpace.from_scalar_tf([0.0, 1.0], [1.0, -LAM])


def erasure(p):
    return statistics_from_spec(DelayChannelSpec.dropout(p))


def loop(k, p=0.3, noise=None):
    return LoopDescription(PLANT, StateSpace.static([[k]]), [erasure(p)], noise)


def test_loop_validation():
    with pytest.raises(DimensionError):
        LoopDescription(PLANT, StateSpace.static([[1.0]]), [erasure(0.3), erasure(0.3)])
    with pytest.raises(DomainError):
        LoopDescription(StateSpace.static([[1.0]]), StateSpace.static([[1.0]]), [erasure(0.3)])
    with pytest.raises(DomainError):
        loop(1.0, noise=[-1.0])


def test_complementary_sensitivity_examples():
    zero = build_complementary_sensitivity(loop(0.0, p=0.0))
    assert np.allclose(zero.freqresp(unit_circle_grid()), 0)
    k = 1.2
    t = build_complementary_sensitivity(loop(k, p=0.0))
    hand = StateSpace.from_scalar_tf([0.0, k], [1.0, -(LAM - k)])
    assert freq_distance(t, hand) <= 1e-10
    assert t.n == 1


def test_example_plant_with_synthesized_controller_gives_stable_tw():
    fam = ExampleFamily(LAM, 0.5, 0.2, 2, 2)
    chans = [statistics_from_spec(DelayChannelSpec.one_step_delay(0.4, 2 / 3)),
             statistics_from_spec(DelayChannelSpec.dropout(0.3))]
    k = synthesize_controller(fam, chans).controller
    lp = LoopDescription(fam.plant(), k, chans)
    t = build_complementary_sensitivity(lp)
    assert t.is_stable()
    assert ms_stability_test(lp).ms_stable


def test_no_uncertainty_gives_zero_rho():
    rep = ms_stability_test(loop(1.0, p=0.0))
    assert rep.nominal_stable and rep.ms_stable and rep.rho == 0.0


def test_erasure_closed_form():
    # static k: T = k(1-p)/(z - lam + k(1-p)), ||T W||^2 = a^2/(1-b^2) * p/(1-p)
    p, k = 0.3, 1.5
    rep = ms_stability_test(loop(k, p))
    a = k * (1 - p)
    expected = a * a / (1 - (LAM - a) ** 2) * p / (1 - p)
    assert np.isclose(rep.rho, expected)
    # optimal-T limit (lam^2 - 1) p/(1-p), attained by the synthesized controller
    fam = GeneralMP(StateSpace.from_scalar_tf([1.0], [1.0, -LAM]), (1,))
    best = synthesize_controller(fam, [erasure(p)]).controller
    rep = ms_stability_test(LoopDescription(PLANT, best, [erasure(p)]))
    assert np.isclose(rep.rho, (LAM ** 2 - 1) * p / (1 - p))
    assert rep.ms_stable


def test_erasure_beyond_threshold_never_stable():
    p = 0.6
    for k in np.linspace(0.05, 6.0, 120):
        rep = ms_stability_test(loop(k, p))
        assert not rep.ms_stable
        assert rep.powers is None


def test_unstable_nominal_loop_reports_no_rho():
    rep = ms_stability_test(loop(0.1, 0.3))
    assert not rep.nominal_stable and not rep.ms_stable
    assert np.isnan(rep.rho)
    d = rep.to_dict()
    assert d["rho"] is None and d["predicted_powers"] is None


def test_g_phi_equals_t_hat_w():
    lp = loop(1.5, 0.3)
    rep = ms_stability_test(lp)
    assert np.allclose(rep.g_phi, rep.t_hat_w, atol=1e-9)


def test_powers_satisfy_fixed_point_and_are_monotone():
    lp = loop(1.5, 0.3, noise=[2.0])
    rep = ms_stability_test(lp)
    pw = rep.powers
    assert np.allclose(pw, rep.g_hat @ lp.noise_variance + rep.g_phi @ pw, atol=1e-9)
    assert np.all(pw >= 0)
    more = ms_stability_test(loop(1.5, 0.3, noise=[3.0])).powers
    assert np.all(more >= pw)
    with pytest.raises(SingularityError):
        stationary_powers(np.eye(1), np.eye(1), np.ones(1))


def two_channel_loop():
    fam = ExampleFamily(LAM, 0.5, 0.2, 1, 2)
    chans = [statistics_from_spec(DelayChannelSpec.one_step_delay(0.3, 0.5)),
             statistics_from_spec(DelayChannelSpec.dropout(0.2))]
    k = synthesize_controller(fam, chans).controller
    return LoopDescription(fam.plant(), k, chans, [1.0, 0.5])


def test_scaled_row_sum_bound_and_permutation():
    lp = two_channel_loop()
    rep = ms_stability_test(lp)
    rng = np.random.default_rng(0)
    for _ in range(100):
        g = np.diag(np.exp(rng.normal(size=2)))
        bound = np.max(np.sum(np.abs(g @ rep.t_hat_w @ np.linalg.inv(g)), axis=1))
        assert rep.rho <= bound + 1e-12
    perm = ms_stability_test(lp.permuted([1, 0]))
    assert np.isclose(perm.rho, rep.rho)
    assert np.allclose(perm.t_hat_w, rep.t_hat_w[np.ix_([1, 0], [1, 0])], atol=1e-10)
    assert np.allclose(perm.powers, rep.powers[[1, 0]], atol=1e-8)


def test_powers_monotone_in_each_noise_variance():
    lp = two_channel_loop()
    base = ms_stability_test(lp).powers
    for i in range(2):
        nv = lp.noise_variance.copy()
        nv[i] += 1.0
        bumped = ms_stability_test(LoopDescription(lp.plant, lp.controller, lp.channels, nv)).powers
        assert np.all(bumped >= base - 1e-12)


def test_input_sensitivity_maps_noise_to_control():
    lp = loop(1.5, 0.3)
    g = input_sensitivity(lp)
    # u = -G v with G = K (1 + P H K)^{-1} P
    kk, mu = 1.5, 0.7
    hand = StateSpace.from_scalar_tf([0.0, kk], [1.0, -(LAM - kk * mu)])
    assert freq_distance(g, hand) <= 1e-10
