"""Monte Carlo estimators, blocking, mixing diagnostics, exponent budgets."""

import math

import numpy as np
import pytest

from seqevl.mesh import graded_mesh
from seqevl.montecarlo import (
    ALPHA_STAR_FEASIBLE_SUP,
    EstimateWithCI,
    RNGSpec,
    build_blocks,
    correlation_DC,
    d0_mixing_gap,
    dprime_sum,
    estimate_Pn,
    estimate_exceedance,
    estimate_exceedances,
    exponent_ledger,
    mc_correlation_DC,
)
from seqevl.thresholds import Observable, build_threshold_schedule

N_FAST = 20_000


@pytest.fixture(scope="module")
def ts20(mesh512, const01):
    return build_threshold_schedule(const01, Observable(form="log"), 1.0, 20, mesh512)


# --------------------------------------------------------------- estimates

def test_from_counts_normal_branch():
    e = EstimateWithCI.from_counts(500, 1000)
    assert e.value == 0.5
    assert e.se == pytest.approx(math.sqrt(0.25 / 1000))
    assert e.method == "normal"
    assert e.ci_low == pytest.approx(0.5 - 1.959963984540054 * e.se)


def test_from_counts_edge_branches():
    e = EstimateWithCI.from_counts(3, 1000)
    assert e.method == "clopper-pearson"
    assert e.ci_low < 3 / 1000 < e.ci_high
    zero = EstimateWithCI.from_counts(0, 1000)
    assert zero.value == 0.0 and zero.ci_low == 0.0 and zero.ci_high > 0.0
    full = EstimateWithCI.from_counts(1000, 1000)
    assert full.value == 1.0 and full.ci_high == 1.0 and full.ci_low < 1.0


def test_from_moments():
    data = np.array([1.0, 2.0, 3.0, 4.0])
    e = EstimateWithCI.from_moments(float(data.sum()), float((data ** 2).sum()), 4)
    assert e.value == 2.5
    assert e.se == pytest.approx(math.sqrt(np.var(data, ddof=1) / 4))


def test_ci_must_bracket_value():
    with pytest.raises(ValueError):
        EstimateWithCI(0.5, 0.1, 10, 0.6, 0.7)


def test_rng_streams_are_label_keyed():
    rng = RNGSpec(seed=42)
    a = rng.uniform_points(100, "x0", "pn")
    b = RNGSpec(seed=42).uniform_points(100, "x0", "pn")
    np.testing.assert_array_equal(a, b)
    c = rng.uniform_points(100, "x0", "other")
    assert not np.array_equal(a, c)
    d = RNGSpec(seed=43).uniform_points(100, "x0", "pn")
    assert not np.array_equal(a, d)


def test_estimate_pn_zero_tau_is_certain(mesh512, const01):
    ts = build_threshold_schedule(const01, Observable(form="log"), 0.0, 5, mesh512)
    e = estimate_Pn(ts, RNGSpec(1), n_samples=4096)
    assert e.value == 1.0
    assert e.ci_high == 1.0


def test_estimate_pn_single_step_closed_form(mesh512, const01):
    # n = 1: survival probability is exactly 1 - tau under the uniform start
    ts = build_threshold_schedule(const01, Observable(form="log"), 0.5, 1, mesh512)
    e = estimate_Pn(ts, RNGSpec(5), n_samples=N_FAST)
    assert abs(e.value - 0.5) <= 3.0 * e.se


def test_estimate_pn_early_exit_equivalence(ts20):
    rng = RNGSpec(7)
    fast = estimate_Pn(ts20, rng, n_samples=N_FAST, early_exit=True)
    slow = estimate_Pn(ts20, rng, n_samples=N_FAST, early_exit=False)
    assert fast.value == slow.value
    assert fast.se == slow.se


def test_estimate_pn_worker_invariance(ts20):
    rng = RNGSpec(11)
    one = estimate_Pn(ts20, rng, n_samples=3 * 16384 + 777, workers=1)
    four = estimate_Pn(ts20, rng, n_samples=3 * 16384 + 777, workers=4)
    assert one.value == four.value and one.se == four.se


def test_estimate_pn_sample_size_consistency(ts20):
    a = estimate_Pn(ts20, RNGSpec(13), n_samples=16384)
    b = estimate_Pn(ts20, RNGSpec(14), n_samples=32768)
    assert abs(a.value - b.value) <= 4.0 * (a.se + b.se)


def test_estimate_exceedances_match_calibrated_mass(ts20):
    ests = estimate_exceedances(ts20, [0, 7, 19], RNGSpec(17), n_samples=N_FAST)
    target = ts20.tau / ts20.n
    for e in ests:
        assert abs(e.value - target) <= 3.0 * max(e.se, 1e-4)
    single = estimate_exceedance(ts20, 7, RNGSpec(17), n_samples=N_FAST)
    assert single.value == ests[1].value  # same stream, same counts


def test_estimate_exceedances_validation(ts20):
    with pytest.raises(ValueError):
        estimate_exceedances(ts20, [], RNGSpec(1))
    with pytest.raises(ValueError):
        estimate_exceedances(ts20, [-1], RNGSpec(1))
    with pytest.raises(ValueError):
        estimate_exceedances(ts20, [20], RNGSpec(1))


# ----------------------------------------------------------------- blocking

def test_build_blocks_partitions_mass(mesh512, const01):
    ts = build_threshold_schedule(const01, Observable(form="log"), 1.0, 200, mesh512)
    blocks = build_blocks(ts, k_n=10)
    assert blocks.bounds[0] == 0 and blocks.bounds[-1] == 200
    assert blocks.n_blocks == 10
    assert np.all(blocks.lengths >= 1)
    assert float(np.sum(blocks.masses)) == pytest.approx(ts.fstar, abs=1e-12)
    # greedy closing: non-final block masses within one step mass of target
    step = float(np.max(ts.step_masses))
    for m in blocks.masses[:-1]:
        assert blocks.target_mass - 1e-12 <= m <= blocks.target_mass + step + 1e-12


def test_build_blocks_defaults_and_validation(mesh512, const01):
    ts = build_threshold_schedule(const01, Observable(form="log"), 1.0, 200, mesh512)
    blocks = build_blocks(ts)  # beta = 0.9 -> k_n = round(200^0.1) = 2
    assert blocks.k_n == 2
    assert blocks.t_star == max(1, round(200 ** 0.85))
    single = build_blocks(ts, k_n=1)
    assert single.n_blocks == 1 and single.lengths[0] == 200
    with pytest.raises(ValueError):
        build_blocks(ts, k_n=0)
    with pytest.raises(ValueError):
        build_blocks(ts, k_n=201)


def test_dprime_zero_for_singleton_blocks(ts20):
    blocks = build_blocks(ts20, k_n=20)
    assert np.all(blocks.lengths == 1)
    e = dprime_sum(ts20, blocks, RNGSpec(19), n_samples=8192)
    assert e.value == 0.0 and e.se == 0.0


def test_dprime_zero_for_zero_tau(mesh512, const01):
    ts = build_threshold_schedule(const01, Observable(form="log"), 0.0, 10, mesh512)
    blocks = build_blocks(ts, k_n=2)
    e = dprime_sum(ts, blocks, RNGSpec(23), n_samples=4096)
    assert e.value == 0.0


def test_dprime_worker_invariance(ts20):
    blocks = build_blocks(ts20, k_n=4)
    one = dprime_sum(ts20, blocks, RNGSpec(29), n_samples=N_FAST, workers=1)
    four = dprime_sum(ts20, blocks, RNGSpec(29), n_samples=N_FAST, workers=4)
    assert one.value == four.value and one.se == four.se


# --------------------------------------------------------------- mixing gap

def test_d0_empty_window_gives_zero_covariance(ts20):
    g = d0_mixing_gap(ts20, i=2, t=3, ell=0, rng=RNGSpec(31), n_samples=8192)
    assert g.covariance == 0.0
    assert g.gap == 0.0
    assert g.p_window == 1.0


def test_d0_validation(ts20):
    with pytest.raises(ValueError):
        d0_mixing_gap(ts20, i=0, t=0, ell=1, rng=RNGSpec(1))
    with pytest.raises(ValueError):
        d0_mixing_gap(ts20, i=-1, t=1, ell=1, rng=RNGSpec(1))
    with pytest.raises(ValueError):
        d0_mixing_gap(ts20, i=10, t=5, ell=6, rng=RNGSpec(1))


def test_d0_small_for_separated_events(ts20):
    g = d0_mixing_gap(ts20, i=0, t=10, ell=4, rng=RNGSpec(37), n_samples=N_FAST)
    # rare event and a distant window decorrelate; gap ~ covariance noise
    assert g.gap <= 5.0 * max(g.se, 1e-5)
    assert 0.0 < g.p_event < 0.2
    assert 0.5 < g.p_window <= 1.0


def test_d0_worker_invariance(ts20):
    one = d0_mixing_gap(ts20, i=1, t=4, ell=3, rng=RNGSpec(41),
                        n_samples=N_FAST, workers=1)
    four = d0_mixing_gap(ts20, i=1, t=4, ell=3, rng=RNGSpec(41),
                         n_samples=N_FAST, workers=4)
    assert one.covariance == four.covariance and one.se == four.se


# ------------------------------------------------------------ decorrelation

def test_correlation_constant_observable_vanishes(mesh512, const01):
    val = correlation_DC(const01, lambda x: np.ones_like(x), (0.2, 0.6),
                         i=1, t=2, mesh=mesh512)
    assert abs(val) <= 1e-15


def test_correlation_zero_lag_is_variance(mesh512, const01):
    # t = 0 with phi = psi reduces to a variance, so the value is nonnegative
    val = correlation_DC(const01, (0.2, 0.5), (0.2, 0.5), i=3, t=0, mesh=mesh512)
    assert val >= -1e-14
    assert val == pytest.approx(0.3 * 0.7, abs=0.05)  # near p(1-p) of the start


def test_correlation_operator_vs_monte_carlo(mesh512, const01):
    phi, psi = (0.2, 0.5), (0.55, 0.8)
    op = correlation_DC(const01, phi, psi, i=2, t=3, mesh=mesh512)
    mc = mc_correlation_DC(const01, phi, psi, i=2, t=3, rng=RNGSpec(43),
                           n_samples=60_000)
    assert abs(op - mc.value) <= 4.0 * max(mc.se, 1e-5)


def test_correlation_decays_in_t(mesh512, const01):
    phi = (0.2, 0.5)
    vals = [abs(correlation_DC(const01, phi, phi, i=0, t=t, mesh=mesh512))
            for t in (1, 5, 25)]
    assert vals[2] < vals[0]


# ----------------------------------------------------------- exponent budget

def test_exponent_ledger_defaults_all_pass():
    checks = exponent_ledger(alpha_star=0.1)
    assert [c.name for c in checks] == [
        "mixing-gap-budget", "pair-sum-budget",
        "recurrence-budget", "block-gap-ordering"]
    assert all(c.satisfied for c in checks)
    by_name = {c.name: c for c in checks}
    # hand-checked arithmetic at beta=0.9, kappa=0.85, xi=0.05, eta=1.8
    assert by_name["mixing-gap-budget"].lhs == pytest.approx(-2.05, abs=1e-12)
    assert by_name["pair-sum-budget"].rhs == pytest.approx(0.85 / 6.45, rel=1e-12)
    assert by_name["recurrence-budget"].rhs == pytest.approx(0.7925, abs=1e-12)
    assert by_name["block-gap-ordering"].lhs == pytest.approx(0.8925, abs=1e-12)


def test_exponent_ledger_at_cap_flags_two_budgets():
    checks = {c.name: c for c in exponent_ledger(alpha_star=1.0 / 7.0)}
    assert not checks["mixing-gap-budget"].satisfied
    assert checks["mixing-gap-budget"].lhs == pytest.approx(0.5, abs=1e-12)
    assert not checks["pair-sum-budget"].satisfied
    assert checks["recurrence-budget"].satisfied
    assert checks["block-gap-ordering"].satisfied


def test_feasible_region_caps_at_one_seventh():
    assert ALPHA_STAR_FEASIBLE_SUP == pytest.approx(1.0 / 7.0, rel=1e-15)
    # kappa, beta -> 1 pushes the pair-sum ceiling to 1/7 from below
    rhs = [c for c in exponent_ledger(0.14, beta=1.0 - 1e-9, kappa=1.0 - 1e-9)
           if c.name == "pair-sum-budget"][0].rhs
    assert rhs == pytest.approx(1.0 / 7.0, rel=1e-6)
