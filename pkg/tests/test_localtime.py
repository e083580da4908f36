"""Local-time estimator tests.

The sampler is exact in law, so the mean of every discrete estimator is a
computable sum of Gamma tails.  Monte Carlo checks here compare against
those exact means (pure z-tests, no bias term), and the discretization bias
itself is checked analytically against the closed-form moments.
"""

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from rbessel import localtime as lt
from rbessel.localtime import (
    LocalTimeSurface,
    MonotonePath,
    StepCouplingWarning,
    coupling_eps,
    estimate_L0,
    estimate_Lhat_direct,
    expected_estimate_L0,
    expected_estimate_Lhat,
    expected_two_param,
    ibp_plus_variant,
    reinforced_local_time_from_base,
    reinforced_local_time_ibp,
    small_level_limit,
    stream_ensemble,
    two_param_local_time,
)
from rbessel.pathsim import SampledPath, SeedSpec, TimeGrid, build_grid, \
    reinforce_path, sample_bessel_path
from rbessel.specfun import Params, indicator_fixture, mean_two_param_local_time, \
    moment_Lhat

P_ZERO = Params(0.5, 0.0)
P_QTR = Params(0.5, 0.25)
P_NEG = Params(0.5, -0.5)
GRID_1E4 = build_grid(1.0, 10_000)
GRID_2E4 = build_grid(1.0, 20_000)
BAND_LEVELS = (0.1, 0.2, 0.4)
BANDWIDTH = 0.05


@pytest.fixture(scope="module")
def ens_quarter():
    """Shared p=0.25 ensemble with bands and an occupation integrand."""
    return stream_ensemble(
        P_QTR, SeedSpec(31415, 1), 2000, GRID_2E4, checkpoints=(0.5, 1.0),
        band_levels=BAND_LEVELS, bandwidth=BANDWIDTH,
        test_function=indicator_fixture(0.2, 0.8))


@pytest.fixture(scope="module")
def ens_zero():
    return stream_ensemble(P_ZERO, SeedSpec(31415, 2), 2000, GRID_1E4)


@pytest.fixture(scope="module")
def ens_neg():
    return stream_ensemble(P_NEG, SeedSpec(31415, 3), 1500, GRID_2E4)


def mc_se(a: np.ndarray) -> float:
    return float(a.std(ddof=1) / math.sqrt(a.size))


class TestMonotonePath:
    def test_accepts_valid(self):
        g = build_grid(1.0, 4)
        mp = MonotonePath(grid=g, values=np.array([0.0, 0.0, 1.0, 1.0, 2.5]))
        assert mp.continuity == "continuous"
        MonotonePath(grid=g, values=np.zeros(5), continuity="cadlag")

    def test_rejections(self):
        g = build_grid(1.0, 2)
        with pytest.raises(ValueError):
            MonotonePath(grid=g, values=np.array([0.1, 0.2, 0.3]))
        with pytest.raises(ValueError):
            MonotonePath(grid=g, values=np.array([0.0, 0.5, 0.4]))
        with pytest.raises(ValueError):
            MonotonePath(grid=g, values=np.array([0.0, 0.5]))
        with pytest.raises(ValueError):
            MonotonePath(grid=g, values=np.zeros(3), continuity="smooth")


class TestLocalTimeSurface:
    def test_validation(self):
        g = build_grid(1.0, 2)
        ok = np.array([[0.0, 1.0, 2.0], [0.0, 0.0, 0.5]])
        LocalTimeSurface(x_levels=[0.5, 1.0], grid=g, values=ok, bandwidth=0.1)
        with pytest.raises(ValueError):
            LocalTimeSurface(x_levels=[1.0, 0.5], grid=g, values=ok,
                             bandwidth=0.1)
        with pytest.raises(ValueError):
            LocalTimeSurface(x_levels=[0.5, 1.0], grid=g, values=ok,
                             bandwidth=0.0)
        with pytest.raises(ValueError):
            LocalTimeSurface(x_levels=[0.5, 1.0], grid=g,
                             values=ok[:, ::-1].copy(), bandwidth=0.1)
        with pytest.raises(ValueError):
            LocalTimeSurface(x_levels=[0.5], grid=g, values=ok, bandwidth=0.1)


class TestStreamTables:
    def test_p_zero_is_trivial(self):
        tb = lt._stream_tables(GRID_1E4.times, P_ZERO)
        assert np.array_equal(tb.t, GRID_1E4.times)
        assert np.all(tb.w_st == 1.0) and np.all(tb.w_ibp == 1.0)
        assert np.all(tb.rt_scale == 1.0)

    def test_mapped_grid_and_scale(self):
        tb = lt._stream_tables(GRID_1E4.times, P_QTR)
        q = P_QTR.one_minus_2p
        np.testing.assert_allclose(tb.t, GRID_1E4.times ** (1.0 / q), rtol=0)
        np.testing.assert_allclose(
            tb.rt_scale, tb.t[1:] ** P_QTR.p / math.sqrt(q), rtol=0)

    def test_stieltjes_weights(self):
        u = GRID_1E4.times
        tb = lt._stream_tables(u, P_QTR)
        g = P_QTR.weight_exponent
        pref = P_QTR.one_minus_2p ** -P_QTR.alpha
        # interior cells: geometric midpoint of the cell, raised to gamma
        mids = np.sqrt(u[5:10] * u[6:11])
        np.testing.assert_allclose(tb.w_st[5:10], pref * mids ** g, rtol=1e-14)
        # the first cell's effective midpoint makes the weight exact under
        # the u^alpha mean growth of L, and collapses to q * u_1^gamma
        want = pref * P_QTR.one_minus_2p * u[1] ** g
        assert tb.w_st[0] == pytest.approx(want, rel=1e-12)
        assert tb.w_ibp[0] == pytest.approx(want, rel=1e-12)

    @pytest.mark.parametrize("p", [0.25, -0.5, 0.45, -2.0])
    def test_ibp_weight_dominates_geometric(self, p):
        # x^g is convex in log x, so the endpoint average always sits above
        # the geometric-midpoint weight
        pr = Params(0.4, p)
        tb = lt._stream_tables(GRID_1E4.times, pr)
        assert np.all(tb.w_ibp[1:] >= tb.w_st[1:])


class TestEstimateL0:
    def test_counts_only_small_values(self):
        g = build_grid(1.0, 4)
        vals = np.array([0.0, 0.005, 3.0, 0.008, 2.0])
        path = SampledPath(grid=g, values=vals, kind="bessel")
        with pytest.warns(StepCouplingWarning):  # toy grid, h >> eps^2
            est = estimate_L0(path, P_ZERO, eps=0.01)
        coef = lt._occupation_coef(P_ZERO, 0.01)
        np.testing.assert_allclose(
            est.values, [0.0, coef * 0.25, coef * 0.25, coef * 0.5, coef * 0.5])

    def test_never_below_eps_gives_zero(self):
        g = build_grid(1.0, 3)
        path = SampledPath(grid=g, values=np.array([0.0, 1.0, 2.0, 1.5]),
                           kind="bessel")
        with pytest.warns(StepCouplingWarning):
            est = estimate_L0(path, P_ZERO, eps=0.01)
        assert np.all(est.values == 0.0)

    def test_coupling_warning(self):
        path = sample_bessel_path(build_grid(1.0, 100), P_ZERO, SeedSpec(1))
        with pytest.warns(StepCouplingWarning) as rec:
            estimate_L0(path, P_ZERO, eps=0.05)  # h = 0.01 > eps^2
        assert rec[0].message.h_max == pytest.approx(0.01)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            estimate_L0(path, P_ZERO)  # default eps = h^0.4 is safe
            # the boundary coupling eps = sqrt(h) is allowed, not a warning
            estimate_L0(path, P_ZERO, eps=coupling_eps(0.01, 0.5))

    def test_rejects_wrong_inputs(self):
        path = sample_bessel_path(build_grid(1.0, 10), P_QTR, SeedSpec(1))
        hat = reinforce_path(path, P_QTR)
        with pytest.raises(ValueError):
            estimate_L0(hat, P_QTR)
        with pytest.raises(ValueError):
            estimate_L0(path, P_QTR, eps=-1.0)

    def test_support_property(self):
        # the estimate is constant exactly on cells whose endpoint value
        # exceeds eps
        path = sample_bessel_path(GRID_1E4, P_ZERO, SeedSpec(17))
        eps = coupling_eps(1e-4)
        est = estimate_L0(path, P_ZERO, eps=eps)
        flat = np.diff(est.values) == 0.0
        assert np.array_equal(flat, path.values[1:] > eps)

    def test_mean_matches_exact_discrete_mean(self, ens_zero):
        # z-test against the analytic mean of this exact estimator
        est = ens_zero.base_L[:, -1]
        exact = expected_estimate_L0(GRID_1E4, P_ZERO, ens_zero.eps_base)[-1]
        assert abs(est.mean() - exact) <= 3.0 * mc_se(est)

    def test_discrete_mean_near_closed_form(self):
        # discretization bias of the default coupling shrinks like eps^(2a);
        # measured analytically, no sampling involved
        ref = moment_Lhat(1, 1.0, P_ZERO)  # sqrt(2/pi)
        grid = build_grid(1.0, 100_000)
        exact = expected_estimate_L0(grid, P_ZERO, coupling_eps(1e-5))[-1]
        assert abs(exact - ref) / ref < 0.01

    def test_eps_consistency(self):
        # Richardson-style self-consistency of the exact means at eps, eps/2
        grid = build_grid(1.0, 100_000)
        eps = coupling_eps(1e-5)
        a = expected_estimate_L0(grid, P_ZERO, eps)[-1]
        b = expected_estimate_L0(grid, P_ZERO, eps / 2.0)[-1]
        assert abs(a - b) / moment_Lhat(1, 1.0, P_ZERO) < 0.01

    def test_half_normal_law_at_p0(self, ens_zero):
        # alpha = 1/2, p = 0: the local time at t=1 is |N(0,1)| in law
        _, p = stats.ks_1samp(ens_zero.base_L[:, -1], stats.halfnorm.cdf)
        assert p > 0.01


class TestTransportedRoutes:
    def test_p_zero_identity(self):
        path = sample_bessel_path(GRID_1E4, P_ZERO, SeedSpec(3))
        L = estimate_L0(path, P_ZERO)
        for op in (reinforced_local_time_from_base, reinforced_local_time_ibp):
            out = op(L, P_ZERO)
            assert np.array_equal(out.values, L.values)
            assert np.array_equal(out.grid.times, L.grid.times)

    def test_rejects_non_monotone_input(self):
        with pytest.raises(TypeError):
            reinforced_local_time_from_base(np.array([0.0, 1.0]), P_QTR)
        with pytest.raises(TypeError):
            reinforced_local_time_ibp("L", P_QTR)
        with pytest.raises(TypeError):
            ibp_plus_variant([0.0], P_QTR)

    def test_output_grid_is_mapped(self):
        path = sample_bessel_path(GRID_1E4, P_QTR, SeedSpec(4))
        L = estimate_L0(path, P_QTR)
        out = reinforced_local_time_from_base(L, P_QTR)
        q = P_QTR.one_minus_2p
        np.testing.assert_allclose(out.grid.times,
                                   L.grid.times ** (1.0 / q), rtol=0)

    @pytest.mark.parametrize("ens_name,params", [
        ("ens_quarter", P_QTR), ("ens_neg", P_NEG)])
    def test_mean_matches_exact_mean(self, ens_name, params, request):
        ens = request.getfixturevalue(ens_name)
        for route, arr in (("stieltjes", ens.stieltjes), ("ibp", ens.ibp)):
            est = arr[:, -1]
            exact = expected_estimate_Lhat(
                ens.grid, params, route=route, eps=ens.eps_base)[-1]
            assert abs(est.mean() - exact) <= 3.0 * mc_se(est), route

    def test_discrete_mean_near_moment(self, ens_quarter):
        ref = moment_Lhat(1, 1.0, P_QTR)
        for route in ("stieltjes", "ibp"):
            exact = expected_estimate_Lhat(
                GRID_2E4, P_QTR, route=route, eps=ens_quarter.eps_base)[-1]
            assert abs(exact - ref) / ref < 0.003, route

    def test_negative_p_bias_rate(self):
        # for p < 0 the u^gamma weight amplifies the small-u error of the
        # occupation window; the bias decays only like eps^(2(a+gamma)),
        # so a tighter coupling exponent is what actually buys accuracy
        ref = moment_Lhat(1, 1.0, P_NEG)
        h = float(np.diff(GRID_2E4.times).max())
        b_default = abs(expected_estimate_Lhat(
            GRID_2E4, P_NEG, route="stieltjes",
            eps=coupling_eps(h))[-1] - ref) / ref
        b_sqrt = abs(expected_estimate_Lhat(
            GRID_2E4, P_NEG, route="stieltjes",
            eps=coupling_eps(h, 0.5))[-1] - ref) / ref
        assert 0.05 < b_default < 0.12
        assert b_sqrt < 0.75 * b_default
        grid = build_grid(1.0, 200_000)
        h = float(np.diff(grid.times).max())
        b_fine = abs(expected_estimate_Lhat(
            grid, P_NEG, route="stieltjes",
            eps=coupling_eps(h, 0.5))[-1] - ref) / ref
        assert b_fine < 0.035

    def test_second_moment(self, ens_quarter):
        est = ens_quarter.stieltjes[:, -1] ** 2
        ref = moment_Lhat(2, 1.0, P_QTR)
        assert abs(est.mean() - ref) <= 3.0 * mc_se(est) + 0.02 * ref

    def test_pathwise_ibp_agrees_with_stieltjes(self):
        # two quadratures of the same integral; the endpoint-average weight
        # dominates the geometric-midpoint weight cell by cell, so their
        # gap is nondecreasing and peaks at the horizon
        grid = build_grid(1.0, 100_000)
        seed = SeedSpec(2718, 4)
        for i in range(20):
            path = sample_bessel_path(grid, P_QTR, seed, i)
            L = estimate_L0(path, P_QTR)
            a = reinforced_local_time_from_base(L, P_QTR).values
            b = reinforced_local_time_ibp(L, P_QTR).values
            gap = b - a
            assert np.all(np.diff(gap) >= 0.0)
            assert a[-1] > 0.0
            assert gap[-1] <= 1e-3 * a[-1]

    def test_boundary_form_equals_telescoped(self):
        path = sample_bessel_path(GRID_1E4, P_NEG, SeedSpec(5))
        L = estimate_L0(path, P_NEG)
        tele = reinforced_local_time_ibp(L, P_NEG).values
        direct = lt._ibp_boundary_form(L, P_NEG, 1.0)
        np.testing.assert_allclose(direct, tele, rtol=0, atol=1e-12 * tele[-1])

    def test_plus_variant_diverges(self):
        # the printed-plus bookkeeping overshoots whenever local time accrues
        path = sample_bessel_path(GRID_1E4, P_QTR, SeedSpec(6))
        L = estimate_L0(path, P_QTR)
        assert L.values[-1] > 0.0
        st = reinforced_local_time_from_base(L, P_QTR).values
        plus = ibp_plus_variant(L, P_QTR)
        assert abs(plus[-1] - st[-1]) > 0.5 * st[-1]

    def test_plus_variant_not_monotone_for_negative_p(self):
        path = sample_bessel_path(GRID_1E4, P_NEG, SeedSpec(7))
        L = estimate_L0(path, P_NEG)
        assert L.values[-1] > 0.0
        plus = ibp_plus_variant(L, P_NEG)
        assert np.any(np.diff(plus) < 0.0)

    def test_plus_variant_collapses_at_p0(self):
        path = sample_bessel_path(GRID_1E4, P_ZERO, SeedSpec(8))
        L = estimate_L0(path, P_ZERO)
        np.testing.assert_array_equal(ibp_plus_variant(L, P_ZERO), L.values)


class TestDirectEstimator:
    def test_p_zero_same_numbers_as_base(self):
        path = sample_bessel_path(GRID_1E4, P_ZERO, SeedSpec(9))
        hat = reinforce_path(path, P_ZERO)
        a = estimate_L0(path, P_ZERO, eps=0.01)
        b = estimate_Lhat_direct(hat, P_ZERO, eps=0.01)
        assert np.array_equal(a.values, b.values)

    def test_rejects_base_path(self):
        path = sample_bessel_path(GRID_1E4, P_QTR, SeedSpec(9))
        with pytest.raises(ValueError):
            estimate_Lhat_direct(path, P_QTR)

    def test_mean_matches_exact_mean(self, ens_quarter):
        est = ens_quarter.direct[:, -1]
        exact = expected_estimate_Lhat(
            GRID_2E4, P_QTR, route="direct", eps=ens_quarter.eps_reinf)[-1]
        assert abs(est.mean() - exact) <= 3.0 * mc_se(est)

    def test_route_agreement_in_mean(self, ens_quarter):
        # independent discretizations of the same object stay within their
        # combined statistical and analytic budgets
        ref = moment_Lhat(1, 1.0, P_QTR)
        for arr, route, eps in (
                (ens_quarter.stieltjes, "stieltjes", ens_quarter.eps_base),
                (ens_quarter.direct, "direct", ens_quarter.eps_reinf)):
            est = arr[:, -1]
            exact = expected_estimate_Lhat(GRID_2E4, P_QTR, route=route,
                                           eps=eps)[-1]
            bias = abs(exact - ref)
            assert abs(est.mean() - ref) <= 3.0 * mc_se(est) + bias


class TestTwoParam:
    def test_band_validation(self):
        path = reinforce_path(
            sample_bessel_path(build_grid(1.0, 50), P_QTR, SeedSpec(10)), P_QTR)
        with pytest.raises(ValueError):
            two_param_local_time(path, P_QTR, [0.2, 0.25], 0.05)  # overlap
        with pytest.raises(ValueError):
            two_param_local_time(path, P_QTR, [0.1], 0.06)  # w > x/2
        with pytest.raises(ValueError):
            two_param_local_time(path, P_QTR, [-0.1, 0.5], 0.02)
        with pytest.raises(ValueError):
            two_param_local_time(path, P_QTR, [0.5, 0.2], 0.02)  # not sorted

    def test_unvisited_level_is_zero(self):
        path = reinforce_path(
            sample_bessel_path(GRID_1E4, P_QTR, SeedSpec(11)), P_QTR)
        lo = float(path.values.max()) + 1.0
        surf = two_param_local_time(path, P_QTR, [lo], 0.1)
        assert np.all(surf.values == 0.0)

    def test_occupation_identity_per_path(self):
        # tile [0.2, 0.8) with bands; the a^-1 sum of band densities times
        # the midpoint weight x^(1-2a) dx reproduces the occupation
        # integral of the indicator.  alpha != 1/2 so the weight is not
        # constant and the normalization is genuinely exercised.
        pr = Params(0.3, 0.25)
        n_bands = 30
        w = 0.3 / n_bands
        levels = 0.2 + (2 * np.arange(n_bands) + 1) * w
        path = reinforce_path(
            sample_bessel_path(build_grid(1.0, 100_000), pr, SeedSpec(12)),
            pr)
        surf = two_param_local_time(path, pr, levels, w)
        dt = np.diff(path.grid.times)
        inside = (0.2 <= path.values[1:]) & (path.values[1:] < 0.8)
        occ = float(np.sum(dt * inside))
        weights = levels ** (1.0 - 2.0 * pr.alpha) * 2.0 * w
        rhs = float(np.sum(surf.values[:, -1] * weights)) / pr.alpha
        assert occ > 0.0
        assert abs(rhs - occ) / occ <= 0.02

    def test_mean_surface(self, ens_quarter):
        # ensemble band means vs their exact discrete means, then the
        # analytic bias to the closed-form mean surface
        for b, x in enumerate(BAND_LEVELS):
            est = ens_quarter.bands[:, -1, b] * \
                lt._band_layout(P_QTR, [x], BANDWIDTH)[2][0]
            exact = expected_two_param(GRID_2E4, P_QTR, x, BANDWIDTH)[-1]
            ref = mean_two_param_local_time(x, 1.0, P_QTR)
            assert abs(est.mean() - exact) <= 3.0 * mc_se(est)
            assert abs(exact - ref) / ref < 0.02


class TestStreamEnsemble:
    def test_matches_per_path_operations(self):
        ens = stream_ensemble(
            P_QTR, SeedSpec(99, 5), 4, GRID_1E4, checkpoints=(0.5, 1.0),
            band_levels=BAND_LEVELS, bandwidth=BANDWIDTH,
            test_function=indicator_fixture(0.2, 0.8))
        for i in range(4):
            base = sample_bessel_path(GRID_1E4, P_QTR, SeedSpec(99, 5), i)
            hat = reinforce_path(base, P_QTR)
            L = estimate_L0(base, P_QTR, eps=ens.eps_base)
            dr = estimate_Lhat_direct(hat, P_QTR, eps=ens.eps_reinf)
            surf = two_param_local_time(hat, P_QTR, BAND_LEVELS, BANDWIDTH)
            dt = np.diff(hat.grid.times)
            occ = np.cumsum(dt * ((0.2 <= hat.values[1:])
                                  & (hat.values[1:] < 0.8)))
            es = list(ens.surfaces())[i]
            for j, u_cp in enumerate(ens.times_u):
                k = GRID_1E4.index_of(u_cp)
                assert L.values[k] == ens.base_L[i, j]
                assert dr.values[k] == ens.direct[i, j]
                assert ens.values[i, j] == hat.values[k]
                assert occ[k - 1] == pytest.approx(ens.occupation[i, j],
                                                   rel=1e-12)
                for b in range(len(BAND_LEVELS)):
                    assert surf.values[b, k] == pytest.approx(
                        es.values[b, j + 1], rel=1e-11, abs=1e-13)

    def test_transported_routes_bitwise(self):
        # the kernel and a straight numpy evaluation from the same stream
        # produce identical bits
        ens = stream_ensemble(P_QTR, SeedSpec(99, 6), 3, GRID_1E4)
        tb = lt._stream_tables(GRID_1E4.times, P_QTR)
        coef = lt._occupation_coef(P_QTR, ens.eps_base)
        for i in range(3):
            base = sample_bessel_path(GRID_1E4, P_QTR, SeedSpec(99, 6), i)
            dL = coef * np.diff(GRID_1E4.times) * (base.values[1:] <= ens.eps_base)
            assert np.cumsum(tb.w_st * dL)[-1] == ens.stieltjes[i, 0]
            assert np.cumsum(tb.w_ibp * dL)[-1] == ens.ibp[i, 0]
            assert np.cumsum(dL)[-1] == ens.base_L[i, 0]

    def test_p_zero_collapse_bitwise(self, ens_zero):
        assert np.array_equal(ens_zero.base_L, ens_zero.stieltjes)
        assert np.array_equal(ens_zero.base_L, ens_zero.ibp)
        assert np.array_equal(ens_zero.base_L, ens_zero.direct)

    def test_thread_count_invariance(self):
        a = stream_ensemble(P_QTR, SeedSpec(99, 7), 32, GRID_1E4,
                            checkpoints=(1.0,))
        b = stream_ensemble(P_QTR, SeedSpec(99, 7), 32, GRID_1E4,
                            checkpoints=(1.0,), threads=4)
        for x, y in ((a.stieltjes, b.stieltjes), (a.direct, b.direct),
                     (a.values, b.values)):
            assert np.array_equal(x, y)

    def test_checkpoint_validation(self):
        with pytest.raises(ValueError):
            stream_ensemble(P_QTR, SeedSpec(1), 1, GRID_1E4,
                            checkpoints=(0.33333,))  # not a grid time
        with pytest.raises(ValueError):
            stream_ensemble(P_QTR, SeedSpec(1), 1, GRID_1E4,
                            checkpoints=(0.0,))
        with pytest.raises(ValueError):
            stream_ensemble(P_QTR, SeedSpec(1), 1, GRID_1E4,
                            checkpoints=(0.5, 0.5))

    def test_band_argument_validation(self):
        with pytest.raises(ValueError):
            stream_ensemble(P_QTR, SeedSpec(1), 1, GRID_1E4,
                            band_levels=[0.5])  # missing bandwidth
        with pytest.raises(ValueError):
            stream_ensemble(P_QTR, SeedSpec(1), 1, GRID_1E4, bandwidth=0.1)

    def test_zero_paths(self):
        ens = stream_ensemble(P_QTR, SeedSpec(1), 0, GRID_1E4)
        assert ens.n_paths == 0 and ens.base_L.shape == (0, 1)

    def test_optional_outputs_absent(self, ens_zero):
        assert ens_zero.occupation is None and ens_zero.bands is None
        with pytest.raises(ValueError):
            next(ens_zero.surfaces())

    def test_reproducible(self):
        a = stream_ensemble(P_NEG, SeedSpec(5, 1), 8, GRID_1E4)
        b = stream_ensemble(P_NEG, SeedSpec(5, 1), 8, GRID_1E4)
        assert np.array_equal(a.stieltjes, b.stieltjes)

    def test_checkpoint_times_mapped(self, ens_quarter):
        q = P_QTR.one_minus_2p
        np.testing.assert_allclose(
            ens_quarter.times_t, ens_quarter.times_u ** (1.0 / q), rtol=0)

    def test_path_object_helpers(self, ens_quarter):
        mp = next(ens_quarter.lhat_paths("stieltjes"))
        assert mp.values[0] == 0.0
        assert mp.values[1] == ens_quarter.stieltjes[0, 0]
        assert mp.grid.times[1] == ens_quarter.times_t[0]
        base = next(ens_quarter.lhat_paths("base"))
        assert base.grid.times[1] == ens_quarter.times_u[0]
        with pytest.raises(ValueError):
            next(ens_quarter.lhat_paths("fastest"))


class TestExpectedMeans:
    def test_refinement_shrinks_bias(self):
        ref = moment_Lhat(1, 1.0, P_QTR)
        biases = []
        for n in (2_000, 20_000):
            grid = build_grid(1.0, n)
            biases.append(abs(expected_estimate_Lhat(
                grid, P_QTR, route="stieltjes")[-1] - ref))
        assert biases[1] < biases[0]

    def test_direct_route_biased_but_consistent(self):
        grid = build_grid(1.0, 50_000)
        ref = moment_Lhat(1, 1.0, P_QTR)
        exact = expected_estimate_Lhat(grid, P_QTR, route="direct")[-1]
        assert abs(exact - ref) / ref < 0.01

    def test_band_mean_approaches_closed_form(self):
        grid = build_grid(1.0, 50_000)
        x = 0.5
        ref = mean_two_param_local_time(x, 1.0, P_QTR)
        wide = expected_two_param(grid, P_QTR, x, 0.2)[-1]
        thin = expected_two_param(grid, P_QTR, x, 0.01)[-1]
        assert abs(thin - ref) < abs(wide - ref)
        assert abs(thin - ref) / ref < 0.005

    def test_unknown_route_rejected(self):
        with pytest.raises(ValueError):
            expected_estimate_Lhat(GRID_1E4, P_QTR, route="trapezoid")


class TestSmallLevelLimit:
    def test_report_on_real_ensemble(self, ens_quarter):
        surfaces = list(ens_quarter.surfaces())
        lhats = list(ens_quarter.lhat_paths("stieltjes"))
        budgets = [abs(expected_two_param(GRID_2E4, P_QTR, x, BANDWIDTH)[-1]
                       - mean_two_param_local_time(x, 1.0, P_QTR))
                   + 0.01 * mean_two_param_local_time(x, 1.0, P_QTR)
                   for x in BAND_LEVELS]
        report = small_level_limit(surfaces, lhats, P_QTR, time=1.0,
                                   bias_budgets=budgets)
        assert report.passed
        names = [r.name for r in report.records]
        assert "l1_trend[x=0.4->0.2]" in names
        assert "mean_gap_trend" in names
        by_name = {r.name: r for r in report.records}
        # the L1 distance to Lhat grows with the level
        d = [by_name[f"l1_distance[x={x:g}]"].estimate for x in BAND_LEVELS]
        assert d[0] < d[1] < d[2]

    def test_single_objects_accepted(self, ens_quarter):
        surf = next(ens_quarter.surfaces())
        lhat = next(ens_quarter.lhat_paths("stieltjes"))
        report = small_level_limit(surf, lhat, P_QTR, time=1.0)
        assert len(report.records) > 0

    def test_validation(self, ens_quarter):
        surfaces = list(ens_quarter.surfaces())[:3]
        lhats = list(ens_quarter.lhat_paths("stieltjes"))[:2]
        with pytest.raises(ValueError):
            small_level_limit(surfaces, lhats, P_QTR)
        with pytest.raises(ValueError):
            small_level_limit([], [], P_QTR)
        with pytest.raises(ValueError):
            small_level_limit(surfaces[:2], lhats, P_QTR,
                              bias_budgets=[0.1])


class TestPropertyBased:
    @given(alpha=st.sampled_from([0.1, 0.3, 0.5, 0.7, 0.9]),
           p=st.sampled_from([-2.0, -0.5, 0.25, 0.45]))
    @settings(max_examples=20, deadline=None)
    def test_table_invariants(self, alpha, p):
        pr = Params(alpha, p)
        u = np.linspace(0.0, 1.0, 257)
        tb = lt._stream_tables(u, pr)
        assert np.all(np.isfinite(tb.w_st)) and np.all(tb.w_st > 0.0)
        assert np.all(tb.w_ibp[1:] >= tb.w_st[1:])
        assert tb.w_st[0] == pytest.approx(tb.w_ibp[0], rel=1e-12)
        assert np.all(np.diff(tb.t) > 0.0)

    @given(seed=st.integers(min_value=0, max_value=2 ** 32))
    @settings(max_examples=10, deadline=None)
    def test_estimators_monotone(self, seed):
        path = sample_bessel_path(build_grid(1.0, 500), P_QTR, SeedSpec(seed))
        L = estimate_L0(path, P_QTR, eps=0.3)
        for out in (L, reinforced_local_time_from_base(L, P_QTR),
                    reinforced_local_time_ibp(L, P_QTR)):
            assert np.all(np.diff(out.values) >= 0.0)
