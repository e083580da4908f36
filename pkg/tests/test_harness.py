"""Experiment driver tests.

The deterministic identity suite is asserted against its declared
tolerance table and its one-second budget.  The Monte Carlo drivers run
once per module at reduced scale under pinned seeds, and the tests
interrogate the resulting reports: record names, exact references,
declared budgets, trend logic, and byte-level reproducibility across
thread counts.  The centering-drift budget is audited against an
independent quadrature of the reinforced marginal density.
"""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from rbessel.harness import (
    ExperimentConfig,
    default_eps_exponent,
    ks_two_sample,
    run_identity_suite,
    run_inverse_suite,
    run_moment_experiment,
    run_occupation_suite,
    run_route_agreement,
    run_scaling_limit_i,
    run_scaling_limit_ii,
    run_selfsim_exponent,
)
from rbessel.pathsim import SeedSpec
from rbessel.specfun import Params, TestFunction, indicator_fixture, \
    moment_Lhat, reinforced_density, sign_balanced_fixture

P_QTR = Params(0.5, 0.25)


def config(master, *, alpha=0.5, p=0.25, **kw):
    kw.setdefault("threads", 2)
    return ExperimentConfig(params=Params(alpha, p),
                            seed=SeedSpec(master, 0), **kw)


def by_name(report):
    return {r.name: r for r in report.records}


def diag_value(report, key):
    """Parse 'key=value' out of a report's diagnostics."""
    prefix = key + "="
    for line in report.diagnostics:
        if line.startswith(prefix):
            return float(line[len(prefix):])
    raise KeyError(key)


# ---------------------------------------------------------------------------
# configuration object

class TestExperimentConfig:
    def test_eps_exponent_policy(self):
        assert default_eps_exponent(0.25) == 0.4
        assert default_eps_exponent(0.0) == 0.4
        assert default_eps_exponent(-0.5) == 0.5

    def test_eps_exp_property_follows_policy_and_override(self):
        assert config(1).eps_exp == 0.4
        assert config(1, p=-0.5).eps_exp == 0.5
        assert config(1, eps_exponent=0.31).eps_exp == 0.31

    def test_hash_is_stable_and_sensitive(self):
        a, b = config(7), config(7)
        assert a.hash == b.hash
        assert len(a.hash) == 64 and int(a.hash, 16) >= 0
        assert config(7, n_paths=2001).hash != a.hash

    def test_hash_ignores_thread_count(self):
        assert config(7, threads=1).hash == config(7, threads=6).hash

    def test_to_dict_flattens_params_and_seed(self):
        d = config(3, alpha=0.3, p=-0.5).to_dict()
        assert d["alpha"] == 0.3 and d["p"] == -0.5
        assert d["master_seed"] == 3 and d["stream_index"] == 0
        assert "params" not in d and "seed" not in d
        assert d["x_levels"] == [0.1, 0.2, 0.4, 0.5, 1.0]

    def test_zero_paths_is_legal(self):
        assert config(1, n_paths=0).n_paths == 0
        assert config(1, lemma5_paths=0).lemma5_paths == 0

    @pytest.mark.parametrize("kw", [
        {"n_paths": -1},
        {"n_steps": 0},
        {"horizon": 0.0},
        {"eps_exponent": 0.0},
        {"eps_exponent": 0.6},
        {"bandwidth": 0.0},
        {"x_levels": ()},
        {"x_levels": (0.2, 0.1)},
        {"scaling_levels": (0, 10)},
        {"moment_orders": (1, 1)},
        {"occupation_support": (0.0, 0.5)},
        {"occupation_support": (0.5, 0.2)},
        {"se_multiplier": 0.0},
        {"ks_pvalue_min": 1.0},
        {"trunc_eps": 0.0},
        {"n_batches": 0},
        {"threads": 0},
        {"lemma5_paths": -1},
    ])
    def test_rejects_bad_fields(self, kw):
        with pytest.raises(ValueError):
            config(1, **kw)


# ---------------------------------------------------------------------------
# deterministic identities

@pytest.fixture(scope="module")
def identity_report():
    return run_identity_suite()


class TestIdentitySuite:
    EXPECTED = {
        "moment_product_identity": 1e-10,
        "mittag_leffler_reduction": 1e-12,
        "exponent_scaling_relation": 1e-12,
        "exponent_vs_jump_quadrature": 1e-6,
        "generator_kernel_identity": 1e-10,
        "variance_constant_cross_route": 1e-8,
    }

    def test_all_identities_hold(self, identity_report):
        assert identity_report.passed
        assert set(by_name(identity_report)) == set(self.EXPECTED)

    def test_worst_errors_within_declared_tolerances(self, identity_report):
        for rec in identity_report.records:
            assert rec.reference == 0.0
            assert rec.bias_budget == self.EXPECTED[rec.name]
            assert 0.0 <= rec.estimate <= rec.bias_budget

    def test_runs_inside_one_second(self, identity_report):
        assert identity_report.runtime_s < 1.0

    def test_deterministic_and_seedless(self, identity_report):
        again = run_identity_suite()
        assert identity_report.seed is None
        assert again.to_json() == identity_report.to_json()


# ---------------------------------------------------------------------------
# moment estimation

@pytest.fixture(scope="module")
def moment_report():
    return run_moment_experiment(config(9100, n_paths=400, n_steps=30_000,
                                        n_batches=50))


class TestMomentExperiment:
    def test_every_route_and_order_passes(self, moment_report):
        assert moment_report.passed
        names = set(by_name(moment_report))
        assert names == {f"moment[{r},n={n}]"
                         for r in ("stieltjes", "ibp", "direct")
                         for n in (1, 2, 3)} | {"moment[bridge,n=1]"}

    def test_references_are_the_closed_form_moments(self, moment_report):
        recs = by_name(moment_report)
        for n in (1, 2, 3):
            ref = moment_Lhat(n, 1.0, P_QTR)
            assert recs[f"moment[stieltjes,n={n}]"].reference == ref
            assert recs[f"moment[stieltjes,n={n}]"].bias_budget == \
                pytest.approx(0.03 * ref)

    def test_records_carry_batch_errors(self, moment_report):
        for rec in moment_report.records:
            assert rec.standard_error > 0.0

    def test_discrete_bias_diagnostics_present(self, moment_report):
        for route in ("stieltjes", "ibp", "direct"):
            assert abs(diag_value(moment_report,
                                  f"discrete_mean_bias[{route}]")) < 0.05

    def test_zero_paths_degenerates_to_failed_empty_report(self):
        rep = run_moment_experiment(config(9101, n_paths=0, n_steps=2_000))
        assert rep.records == () and not rep.passed


# ---------------------------------------------------------------------------
# estimator route agreement

@pytest.fixture(scope="module")
def route_report():
    return run_route_agreement(config(9200, n_paths=300, n_steps=30_000,
                                      route_sup_paths=16, n_batches=50))


class TestRouteAgreement:
    def test_report_passes_with_all_records(self, route_report):
        assert route_report.passed
        assert set(by_name(route_report)) == {
            "mean_gap[stieltjes-ibp]", "mean_gap[stieltjes-direct]",
            "ibp_pathwise_sup", "ibp_plus_divergence"}

    def test_mean_gaps_reference_exact_discrete_values(self, route_report):
        recs = by_name(route_report)
        for name in ("mean_gap[stieltjes-ibp]", "mean_gap[stieltjes-direct]"):
            assert recs[name].reference != 0.0
            assert recs[name].reference_provenance == \
                "expected_estimate_Lhat difference"

    def test_telescoped_form_tracks_while_flipped_sign_leaves(
            self, route_report):
        recs = by_name(route_report)
        assert recs["ibp_pathwise_sup"].estimate <= 1e-3
        assert recs["ibp_plus_divergence"].estimate > 1e-3

    def test_at_p_zero_the_sign_fixture_is_omitted(self):
        rep = run_route_agreement(config(9201, p=0.0, n_paths=150,
                                         n_steps=20_000, route_sup_paths=8,
                                         n_batches=30))
        assert rep.passed
        assert "ibp_plus_divergence" not in by_name(rep)
        assert "ibp_pathwise_sup" in by_name(rep)


# ---------------------------------------------------------------------------
# first-order scaling limit

@pytest.fixture(scope="module")
def scaling_i_report():
    cfg = config(9300, n_paths=400, n_steps=40_000, n_batches=50)
    return run_scaling_limit_i(indicator_fixture(0.0, 1.0), cfg)


class TestScalingLimitI:
    def test_coupled_gaps_shrink_along_the_levels(self, scaling_i_report):
        assert scaling_i_report.passed
        recs = by_name(scaling_i_report)
        gaps = [recs[f"coupled_gap[n={n}]"].estimate
                for n in (100, 1000, 10000)]
        assert gaps[0] > gaps[1] > gaps[2] > 0.0

    def test_trend_records_carry_the_pass_rule(self, scaling_i_report):
        recs = by_name(scaling_i_report)
        for name in ("coupled_trend[n=100->1000]",
                     "coupled_trend[n=1000->10000]"):
            assert recs[name].passed and recs[name].estimate > 0.0

    def test_terminal_law_matches_scaled_local_time(self, scaling_i_report):
        rec = by_name(scaling_i_report)["terminal_ks_pvalue"]
        assert rec.passed and rec.estimate > 0.01
        assert diag_value(scaling_i_report, "c1") == 2.0

    def test_zero_function_is_admitted_and_trivial(self):
        cfg = config(9301, n_paths=40, n_steps=4_000, n_batches=10)
        rep = run_scaling_limit_i(TestFunction([]), cfg)
        assert rep.passed
        recs = by_name(rep)
        for n in (100, 1000, 10000):
            assert recs[f"coupled_gap[n={n}]"].estimate == 0.0
        assert recs["terminal_ks_pvalue"].estimate == 1.0

    def test_balanced_function_is_rejected(self):
        with pytest.raises(ValueError, match="second-order"):
            run_scaling_limit_i(sign_balanced_fixture(P_QTR), config(9302))


# ---------------------------------------------------------------------------
# second-order scaling limit

@pytest.fixture(scope="module")
def scaling_ii_report():
    cfg = config(9400, n_paths=400, n_steps=50_000, n_batches=50)
    return run_scaling_limit_ii(sign_balanced_fixture(P_QTR), cfg)


class TestScalingLimitII:
    def test_centered_variance_and_law_all_pass(self, scaling_ii_report):
        assert scaling_ii_report.passed
        recs = by_name(scaling_ii_report)
        assert set(recs) == {"limit_mean", "limit_variance",
                             "limit_ks_pvalue"}
        assert recs["limit_variance"].reference == \
            pytest.approx(16.0 / 3.0 * moment_Lhat(1, 1.0, P_QTR), rel=1e-15)
        assert recs["limit_ks_pvalue"].estimate > 0.01

    def test_mean_budget_is_the_declared_centering_drift(
            self, scaling_ii_report):
        drift = diag_value(scaling_ii_report, "centering_drift")
        assert by_name(scaling_ii_report)["limit_mean"].bias_budget == drift

    def test_centering_drift_matches_marginal_quadrature(
            self, scaling_ii_report):
        # independent route: integrate E f(Rhat_s) against the marginal
        # density in continuous time; the discrete sum sits within the
        # step-size error of it
        f, n = sign_balanced_fixture(P_QTR), 10_000.0

        def mean_f(s):
            return sum(c * quad(lambda x: x ** e
                                * reinforced_density(x, s, P_QTR), lo, hi)[0]
                       for lo, hi, terms in f.pieces for c, e in terms)

        a = P_QTR.alpha
        cont = quad(lambda u: mean_f(u ** (1 / a)) * u ** (1 / a - 1) / a,
                    0.0, n ** a, limit=400)[0] * n ** (-a / 2)
        drift = diag_value(scaling_ii_report, "centering_drift")
        assert drift == pytest.approx(cont, rel=5e-3)

    def test_skewness_diagnostics_shrink_toward_symmetry(
            self, scaling_ii_report):
        first = diag_value(scaling_ii_report, "skewness[n=100]")
        last = diag_value(scaling_ii_report, "skewness[n=10000]")
        assert abs(last) < abs(first)

    def test_unbalanced_function_is_rejected(self):
        with pytest.raises(ValueError):
            run_scaling_limit_ii(indicator_fixture(0.0, 1.0), config(9401))


# ---------------------------------------------------------------------------
# occupation density

@pytest.fixture(scope="module")
def occupation_report():
    return run_occupation_suite(config(9500, n_paths=300, n_steps=40_000,
                                       n_batches=50))


class TestOccupationSuite:
    def test_identity_is_exact_where_the_weight_is_flat(
            self, occupation_report):
        # at alpha = 1/2 the speed density is constant, so the aligned
        # band tiling reproduces the indicator integral to rounding
        assert occupation_report.passed
        rec = by_name(occupation_report)["occupation_residual"]
        assert rec.estimate < 1e-10

    def test_quadrature_factor_shows_away_from_one_half(self):
        rep = run_occupation_suite(config(9501, alpha=0.3, n_paths=150,
                                          n_steps=20_000, n_batches=30))
        rec = by_name(rep)["occupation_residual"]
        assert 0.0 < rec.estimate <= 0.02

    def test_mean_surface_matches_the_quadrature_reference(
            self, occupation_report):
        recs = by_name(occupation_report)
        for x in (0.1, 0.2, 0.4, 0.5, 1.0):
            rec = recs[f"mean_density[x={x:g}]"]
            assert rec.passed and rec.reference > 0.0

    def test_small_level_trend_records_pass(self, occupation_report):
        recs = by_name(occupation_report)
        assert recs["l1_trend[x=0.2->0.1]"].passed
        assert recs["mean_gap_trend"].passed

    def test_bandwidth_must_tile_the_support(self):
        with pytest.raises(ValueError, match="tile"):
            run_occupation_suite(config(9502,
                                        occupation_support=(0.2, 0.75)))


# ---------------------------------------------------------------------------
# self-similarity exponent

class TestSelfsimExponent:
    def test_slope_recovers_alpha(self):
        # slope noise at 600 paths is near 0.015, so the declared band
        # is widened to match the scale of this run
        rep = run_selfsim_exponent(config(9600, n_paths=600,
                                          n_steps=50_000, slope_tol=0.05))
        assert rep.passed
        rec = by_name(rep)["selfsim_slope"]
        assert rec.reference == 0.5 and rec.bias_budget == 0.05
        assert abs(rec.estimate - 0.5) < 0.05
        means = [diag_value(rep, f"mean_lhat[t={t:g}]")
                 for t in (0.5, 1.0, 2.0)]
        assert means[0] < means[1] < means[2]


# ---------------------------------------------------------------------------
# inverse-process suite

@pytest.fixture(scope="module")
def inverse_report():
    return run_inverse_suite(config(9700, n_paths=1000, n_steps=20_000,
                                    lemma5_paths=12, n_batches=50))


class TestInverseSuite:
    def test_full_pipeline_passes(self, inverse_report):
        assert inverse_report.passed
        names = set(by_name(inverse_report))
        assert names == {"laplace_xi[r=0.5]", "laplace_xi[r=1]",
                         "laplace_xi[r=2]", "exp_functional_mean",
                         "size_bias[ind01]", "paper_normalization[ind01]",
                         "size_bias[xcap]", "paper_normalization[xcap]",
                         "coupled_route_paths_failed"}

    def test_laplace_records_declare_truncation_budgets(self, inverse_report):
        for r in (0.5, 1, 2):
            rec = by_name(inverse_report)[f"laplace_xi[r={r:g}]"]
            assert 0.0 < rec.bias_budget < 1e-9
            assert rec.standard_error > 0.0

    def test_no_coupled_route_violations(self, inverse_report):
        rec = by_name(inverse_report)["coupled_route_paths_failed"]
        assert rec.estimate == 0.0
        assert diag_value(inverse_report, "lemma5_paths") == 12
        assert diag_value(inverse_report, "lemma5_unresolved") >= 0

    def test_truncation_override_is_honored(self):
        rep = run_inverse_suite(config(9701, n_paths=100, n_steps=5_000,
                                       lemma5_paths=0, trunc_eps=1e-5,
                                       n_batches=20))
        assert diag_value(rep, "trunc_eps") == 1e-5
        assert "coupled_route_paths_failed" not in by_name(rep)


# ---------------------------------------------------------------------------
# shared plumbing

class TestKsTwoSample:
    def test_identical_samples(self):
        x = np.linspace(0.0, 1.0, 50)
        stat, pval = ks_two_sample(x, x)
        assert stat == 0.0 and pval == 1.0

    def test_disjoint_samples(self):
        stat, pval = ks_two_sample(np.arange(40.0), np.arange(40.0) + 100.0)
        assert stat == 1.0 and pval < 1e-6

    def test_rejects_empty_input(self):
        with pytest.raises(ValueError):
            ks_two_sample(np.array([]), np.arange(3.0))


class TestReproducibility:
    def test_reports_are_byte_identical_across_thread_counts(self):
        kw = dict(n_paths=200, n_steps=20_000, n_batches=20)
        one = run_moment_experiment(config(9800, threads=1, **kw))
        three = run_moment_experiment(config(9800, threads=3, **kw))
        assert one.to_json() == three.to_json()
