import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from conftest import wide_client, two_client, three_client
from fairfedlab import population as pop
from fairfedlab.errors import ClipWarning, DomainError, RangeError, UnsupportedError
from fairfedlab.population import (
    ClientPopulation,
    GroupDistribution,
    GroupMixture,
    LinkFunction,
    PartitionSpec,
    PopulationSpec,
    ThresholdClassifier,
)


def client(mu0, mu1, sigma=1.0, q=0.5):
    return ClientPopulation(GroupDistribution(mu0, sigma), GroupDistribution(mu1, sigma), q)


# --- link -------------------------------------------------------------------


def test_link_round_trip_and_odd():
    link = LinkFunction()
    p = np.linspace(0.001, 0.999, 999)
    np.testing.assert_allclose(link.forward(link.inverse(p)), p, atol=1e-10)
    x = np.linspace(-20, 20, 401)
    np.testing.assert_allclose(link.forward(x) - 0.5, -(link.forward(-x) - 0.5), atol=1e-15)
    assert np.all(np.diff(link.forward(np.linspace(-30, 30, 1000))) > 0)


def test_unknown_link_kind():
    with pytest.raises(DomainError):
        LinkFunction("probit")


# --- g ----------------------------------------------------------------------


def test_g_identical_groups_is_zero():
    assert pop.compute_g(client(1.0, 1.0, 2.5), 0.0) == 0.0


def test_g_gaussian_tail_oracle():
    # thresholds are both 0 at lam=0 and q=1/2
    assert pop.compute_g(client(3.0, 5.0), 0.0) == pytest.approx(norm.cdf(3) - norm.cdf(5), rel=1e-12)
    g = pop.compute_g(client(3.0, -1.0), 0.0)
    assert g == pytest.approx(norm.cdf(3) - norm.cdf(-1), rel=1e-12)
    assert g > 0


def test_g_requires_open_q():
    with pytest.raises(DomainError):
        pop.compute_g(client(0.0, 1.0, q=0.0), 0.0)
    with pytest.raises(DomainError):
        ClientPopulation(GroupDistribution(0, 1), GroupDistribution(0, 1), 1.5)


def test_g_warns_outside_admissible_interval():
    c = client(0.0, 1.0, q=0.3)
    with pytest.warns(ClipWarning):
        g = pop.compute_g(c, 0.9)
    assert g == pop.compute_g(c, 0.7)


def test_saturated_thresholds_are_infinite():
    clf = ThresholdClassifier(0.5, 0.5)
    assert clf.saturated
    t0, t1 = clf.thresholds()
    assert t0 == -np.inf and t1 == np.inf


def test_g_strictly_increasing():
    c = client(3.0, -1.0)
    lam = np.linspace(-0.499, 0.499, 100)
    g = np.array([pop.compute_g(c, l) for l in lam])
    assert np.all(np.diff(g) > 1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(-0.49, 0.49), st.floats(-3, 3), st.floats(-3, 3), st.floats(0.3, 3.0))
def test_invert_round_trip(lam, m0, m1, s):
    c = client(m0, m1, s)
    g = pop.compute_g(c, lam)
    # g is flat where both tails vanish; compare in g-space there
    back = pop.invert_g(c, g)
    assert abs(back - lam) <= 1e-6 or abs(pop.compute_g(c, back) - g) <= 1e-9


def test_invert_fixed_points():
    c = client(3.0, -1.0)
    assert pop.invert_g(c, pop.compute_g(c, 0.1)) == pytest.approx(0.1, abs=1e-6)
    assert abs(pop.invert_g(c, pop.compute_g(c, 0.0))) <= 1e-6
    assert abs(pop.invert_g(client(2.0, 2.0), 0.0)) <= 1e-6


def test_invert_out_of_range():
    with pytest.raises(RangeError):
        pop.invert_g(client(3.0, -1.0), 1.5)


def test_mixture_linearity():
    spec = two_client(0.5, 0.5)
    for lam in (-0.3, 0.0, 0.2):
        mean = np.mean([pop.compute_g(c, lam) for c in spec.clients])
        assert pop.compute_g(spec, lam) == pytest.approx(mean, abs=1e-15)


def test_group_mixture_matches_pooled_spec():
    mix = GroupMixture(((0.5, GroupDistribution(3.0, 1.0)), (0.5, GroupDistribution(1.0, 1.0))))
    mix1 = GroupMixture(((0.5, GroupDistribution(5.0, 1.0)), (0.5, GroupDistribution(-1.0, 1.0))))
    c = ClientPopulation(mix, mix1, 0.5)
    assert pop.compute_g(c, 0.1) == pytest.approx(pop.compute_g(two_client(0.5, 0.5), 0.1), abs=1e-15)
    with pytest.raises(DomainError):
        GroupMixture(((0.3, GroupDistribution(0, 1)),))


# --- CFL --------------------------------------------------------------------


def test_cfl_fair_erm_case():
    spec = two_client(0.5, 0.5)
    g0 = abs(pop.compute_g(spec, 0.0))
    clf, pt = pop.solve_cfl(spec, g0 + 0.01)
    assert clf.lam == 0.0
    assert pt.dp_disp == pytest.approx(g0, abs=1e-12)


@pytest.mark.parametrize("q", [(0.5, 0.5), (0.3, 0.7), (0.1, 0.9)])
def test_cfl_perfect_fairness(q):
    _, pt = pop.solve_cfl(two_client(*q), 0.0)
    assert pt.dp_disp <= 1e-6


def test_cfl_lambda_sign_follows_g0():
    c = client(3.0, -1.0)  # g(0) > 0
    spec = PopulationSpec((c,))
    for eps in (0.0, 0.1, 0.3):
        clf, _ = pop.solve_cfl(spec, eps)
        assert clf.lam <= 0.0
    spec = PopulationSpec((client(-1.0, 3.0),))
    clf, _ = pop.solve_cfl(spec, 0.1)
    assert clf.lam >= 0.0


def test_cfl_accuracy_monotone():
    spec = two_client(0.3, 0.7)
    acc = [pop.solve_cfl(spec, e)[1].accuracy for e in np.linspace(0, 0.5, 26)]
    assert np.all(np.diff(acc) >= -1e-12)


def test_cfl_monte_carlo():
    spec = two_client(0.5, 0.5)
    clf, pt = pop.solve_cfl(spec, 0.0)
    acc, acc_se, md, md_se = pop.monte_carlo(spec, clf.predict, n=1_000_000, seed=3)
    assert abs(acc - pt.accuracy) <= max(3 * acc_se, 0.003)
    assert abs(md) <= 3 * md_se + 1e-6


def test_cfl_unequal_q_pooled_accuracy_monte_carlo():
    spec = two_client(0.2, 0.8)
    clf, pt = pop.solve_cfl(spec, 0.05)
    acc, acc_se, md, md_se = pop.monte_carlo(spec, clf.predict, n=400_000, seed=4)
    assert abs(acc - pt.accuracy) <= 3 * acc_se
    assert abs(abs(md) - pt.dp_disp) <= 3 * md_se


# --- LFT+Ensemble -----------------------------------------------------------


def test_ensemble_erm_when_budgets_loose():
    spec = two_client(0.5, 0.5)
    mix, pt = pop.solve_lft_ensemble(spec, [1.0, 1.0])
    assert all(c.lam == 0.0 for _, c in mix.components)
    _, erm = pop.solve_cfl(spec, 1.0)
    assert pt.accuracy == pytest.approx(erm.accuracy, abs=1e-12)


def test_ensemble_identical_clients():
    c = client(3.0, -1.0)
    spec = PopulationSpec((c, c))
    for eps in (0.0, 0.2, 0.5):
        mix, pt = pop.solve_lft_ensemble(spec, [eps, eps])
        lam = mix.components[0][1].lam
        assert pt.dp_disp == pytest.approx(abs(pop.compute_g(c, lam)), abs=1e-12)


def test_ensemble_monte_carlo():
    spec = two_client(0.5, 0.5)
    mix, pt = pop.solve_lft_ensemble(spec, [0.05, 0.1])
    acc, acc_se, md, md_se = pop.monte_carlo(spec, mix.predict, n=400_000, seed=5)
    assert abs(acc - pt.accuracy) <= 3 * acc_se
    assert abs(abs(md) - pt.dp_disp) <= 3 * md_se


# --- psi and delta ----------------------------------------------------------


def test_psi_zero_on_identical_clients():
    c = client(3.0, -1.0)
    assert pop.compute_psi(PopulationSpec((c, c)), 0.0, 0.0) == pytest.approx(0.0, abs=1e-9)


def test_psi_range_error():
    spec = wide_client()
    with pytest.raises(RangeError):
        pop.compute_psi(spec, 0.9, 0.0)


def test_psi_requires_equal_q():
    with pytest.raises(UnsupportedError):
        pop.compute_psi(two_client(0.3, 0.7), 0.0, 0.0)


def test_wide_client_delta():
    d = pop.compute_delta(wide_client())
    assert 0.19 <= d.delta <= 0.23
    assert d.condition_holds
    assert d.g0_at_zero * d.g1_at_zero <= 0 or abs(d.g0_at_zero) < 1e-3


def test_wide_client_psi_keeps_sign():
    spec = wide_client()
    e0, e1, psi = pop.psi_grid(spec, 41)
    d = pop.compute_delta(spec)
    assert np.all(np.sign(psi) == np.sign(d.g0_at_zero + d.g1_at_zero))
    assert np.abs(psi).min() >= d.delta - 1e-12


def test_wide_client_ensemble_floor():
    pts = pop.achievable_points(wide_client(), "LFT+Ensemble")
    assert min(p.dp_disp for p in pts) >= 0.19


def test_delta_symmetric_clients_zero_without_condition():
    c = client(3.0, -1.0)
    d = pop.compute_delta(PopulationSpec((c, c)))
    assert d.delta <= 1e-9
    assert not d.condition_holds


def test_narrow_distribution_floor_is_zero():
    # both clients' exact-parity lambdas coincide, so psi has a root
    spec = PopulationSpec(
        (
            ClientPopulation(GroupDistribution(10.0, 0.2), GroupDistribution(9.8, 0.2), 0.2),
            ClientPopulation(GroupDistribution(0.2, 0.2), GroupDistribution(0.0, 0.2), 0.2),
        )
    )
    assert pop.compute_delta(spec).delta <= 1e-6


def test_partitioned_delta_two_subsets_equals_plain():
    spec = wide_client()
    d = pop.compute_delta(spec, 101)
    dp = pop.compute_delta_partitioned(spec, PartitionSpec(((0,), (1,))), 101)
    assert dp.delta == pytest.approx(d.delta, abs=1e-12)


def test_partitioned_delta_three_clients():
    c0 = ClientPopulation(GroupDistribution(0.0, 70.0), GroupDistribution(0.0, 70.0), 0.5)
    c1 = client(3.0, -1.0)
    spec = PopulationSpec((c0, c0, c1))
    part = PartitionSpec(((0, 1), (2,)))
    assert part.weights() == pytest.approx((2 / 3, 1 / 3))
    d = pop.compute_delta_partitioned(spec, part, 101)
    assert d.delta > 0.05
    with pytest.raises(DomainError):
        PartitionSpec(((0,), (0, 1)))


# --- LFT+FedAvg -------------------------------------------------------------


def test_lft_fedavg_loose_budget_is_erm():
    spec = two_client(0.5, 0.5)
    prob = pop.discretize(spec, n_points=256)
    clf, pt = pop.solve_lft_fedavg(spec, [1.0, 1.0], problem=prob)
    c = prob.objective()
    # cells with zero gain may go either way; the objective must match ERM
    assert c @ clf.f.ravel() == pytest.approx(c @ (c > 0), abs=1e-9)
    np.testing.assert_array_equal(clf.f.ravel()[np.abs(c) > 1e-10], (c > 0)[np.abs(c) > 1e-10])
    _, cfl = pop.solve_cfl(spec, 1.0)
    assert pt.accuracy == pytest.approx(cfl.accuracy, abs=2e-3)


def test_grid_covers_mass():
    prob = pop.discretize(two_client(0.5, 0.5), n_points=256)
    interior = prob.mass[:, :, 1:-1].sum(axis=2)
    assert np.all(interior >= 0.9999)
    np.testing.assert_allclose(prob.mass.sum(axis=2), 1.0, atol=1e-12)


@pytest.mark.parametrize("eps", [0.0, 0.02, 0.1])
def test_lft_fedavg_global_disparity_bounded(eps):
    _, pt = pop.solve_lft_fedavg(two_client(0.5, 0.5), [eps, eps], n_points=128)
    assert pt.dp_disp <= eps + 1e-6


def test_lft_fedavg_local_fairness_not_global_for_unequal_q():
    # every client exactly fair, yet the pooled groups still differ
    spec = two_client(0.2, 0.8)
    prob = pop.discretize(spec, n_points=128)
    clf, pt = pop.solve_lft_fedavg(spec, [0.0, 0.0], problem=prob)
    assert np.abs(prob.client_md() @ clf.f.ravel()).max() <= 1e-9
    assert pt.dp_disp > 0.1


def test_lft_fedavg_strict_gap_heterogeneous_q():
    spec = two_client(0.1, 0.9)
    m = pop.min_disparity(spec, "LFT+FedAvg", n_points=128)
    assert m > 0.0
    assert m > pop.min_disparity(spec, "CFL")


@pytest.mark.parametrize("seed", range(5))
def test_lp_matches_multiplier_search(seed):
    rng = np.random.default_rng(seed)
    q = rng.uniform(0.2, 0.8)
    spec = PopulationSpec.gaussian(
        [(rng.uniform(-1, 4), rng.uniform(-1, 4), rng.uniform(0.5, 1.5), q) for _ in range(2)]
    )
    prob = pop.discretize(spec, n_points=64)
    tops = np.abs(prob.client_md() @ (prob.objective() > 0))
    eps = rng.uniform(0.0, 1.0, 2) * tops
    f = pop.solve_finite_lp(prob, eps)
    acc, _ = prob.evaluate(f)
    bound, _ = pop.lagrangian_bound(prob, eps)
    assert abs(bound - acc) <= 1e-3
    assert bound >= acc - 1e-9


def test_lft_fedavg_classifier_family():
    spec = two_client(0.5, 0.5)
    clf = pop.LftFedAvgClassifier((0.0, 0.0), 0.5, spec)
    x = np.linspace(-4, 8, 50)
    # zero multipliers give the Bayes rule eta > 1/2
    np.testing.assert_array_equal(clf.predict(x, np.zeros(50, int)), (x > 0).astype(float))


# --- curves -----------------------------------------------------------------


@pytest.mark.parametrize("method", pop.METHODS)
def test_tradeoff_curve_monotone(method):
    eps = np.linspace(0, 0.4, 9)
    curve = pop.tradeoff_curve(two_client(0.5, 0.5), method, eps, n_points=64)
    acc = [p.accuracy for p in curve]
    assert np.all(np.diff(acc) >= -1e-9)
    assert all(p.dp_disp <= p.epsilon + 1e-6 for p in curve)


def test_cfl_curve_flat_beyond_g0():
    spec = two_client(0.5, 0.5)
    g0 = abs(pop.compute_g(spec, 0.0))
    curve = pop.tradeoff_curve(spec, "CFL", [g0, g0 + 0.1, 0.9])
    assert curve[0].accuracy == pytest.approx(curve[-1].accuracy, abs=1e-9)


def test_three_client_ordering():
    spec = three_client((0.5, 0.5, 0.5))
    cfl = pop.min_disparity(spec, "CFL")
    fedavg = pop.min_disparity(spec, "LFT+FedAvg", n_points=64)
    ens = pop.min_disparity(spec, "LFT+Ensemble")
    assert cfl <= 1e-4
    assert fedavg >= cfl
    assert ens > fedavg


def test_unknown_method():
    with pytest.raises(DomainError):
        pop.achievable_points(two_client(0.5, 0.5), "Oracle")
