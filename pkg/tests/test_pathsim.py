"""Distributional and plumbing checks for the path sampler.

The sampler's transitions are exact in law, so goodness-of-fit tests compare
against the closed-form marginals at honest p-value thresholds rather than
against discretization-dependent tolerances.
"""

import math

import numpy as np
import pytest
from scipy import stats

from rbessel.pathsim import (
    MAX_GRID_POINTS,
    SampledPath,
    SeedSpec,
    TimeGrid,
    build_grid,
    reinforce_path,
    sample_bessel_path,
)
from rbessel.specfun import Params, reinforced_cdf

SEED = SeedSpec(master_seed=20260815, stream_index=0)


def sample_terminal_squares(params, t, n_paths, stream, n_steps=1):
    """Terminal squared values over an ensemble on a uniform grid."""
    grid = build_grid(t, n_steps)
    seed = SeedSpec(SEED.master_seed, stream)
    out = np.empty(n_paths)
    for i in range(n_paths):
        out[i] = sample_bessel_path(grid, params, seed, i).values[-1] ** 2
    return out


class TestBuildGrid:
    def test_uniform(self):
        g = build_grid(1.0, 4)
        np.testing.assert_allclose(g.times, [0.0, 0.25, 0.5, 0.75, 1.0], atol=0)
        assert g.scheme == "uniform" and g.n_steps == 4

    def test_geometric_shape(self):
        g = build_grid(2.0, 5000, "geometric", delta0=1e-7)
        assert g.times[0] == 0.0 and g.times[-1] == 2.0
        assert np.all(np.diff(g.times) > 0.0)
        # first increment lands near delta0, ratio is constant
        steps = np.diff(g.times)
        assert steps[0] == pytest.approx(1e-7, rel=0.05)
        ratios = steps[1:] / steps[:-1]
        np.testing.assert_allclose(ratios, ratios[0], rtol=1e-9)

    def test_geometric_refines_origin(self):
        g = build_grid(1.0, 100_000, "geometric")
        frac = np.mean(g.times <= 0.01)
        assert frac > 0.2  # bulk of the resolution sits near zero

    def test_include_checkpoints(self):
        g = build_grid(1.0, 7, include=(0.5, 0.30000001))
        assert g.index_of(0.5) > 0
        assert g.index_of(0.30000001) > 0
        with pytest.raises(ValueError):
            g.index_of(0.123)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            build_grid(1.0, 0)
        with pytest.raises(ValueError):
            build_grid(-1.0, 5)
        with pytest.raises(ValueError):
            build_grid(1.0, 5, "geometric", delta0=0.5)  # delta0 * n >= t_max
        with pytest.raises(ValueError):
            build_grid(1.0, MAX_GRID_POINTS + 1)
        with pytest.raises(ValueError):
            build_grid(1.0, 5, "chebyshev")


class TestGridAndPathTypes:
    def test_grid_validation(self):
        with pytest.raises(ValueError):
            TimeGrid(times=np.array([0.1, 0.5]))
        with pytest.raises(ValueError):
            TimeGrid(times=np.array([0.0, 0.5, 0.5]))
        with pytest.raises(ValueError):
            TimeGrid(times=np.array([0.0]))

    def test_path_validation(self):
        g = build_grid(1.0, 2)
        with pytest.raises(ValueError):
            SampledPath(grid=g, values=np.array([0.0, 1.0]))
        with pytest.raises(ValueError):
            SampledPath(grid=g, values=np.array([0.1, 1.0, 1.0]))
        with pytest.raises(ValueError):
            SampledPath(grid=g, values=np.array([0.0, -1.0, 1.0]))
        with pytest.raises(ValueError):
            SampledPath(grid=g, values=np.zeros(3), kind="brownian")

    def test_seed_validation(self):
        with pytest.raises(ValueError):
            SeedSpec(master_seed=-1)
        with pytest.raises(ValueError):
            SeedSpec(master_seed=1, stream_index=-2)


class TestReproducibility:
    def test_identical_seed_bit_identical(self):
        g = build_grid(1.0, 500, "geometric", delta0=1e-6)
        pr = Params(0.4, 0.1)
        a = sample_bessel_path(g, pr, SEED, path_index=3)
        b = sample_bessel_path(g, pr, SEED, path_index=3)
        assert np.array_equal(a.values, b.values)

    def test_streams_and_paths_differ(self):
        g = build_grid(1.0, 50)
        pr = Params(0.5, 0.0)
        base = sample_bessel_path(g, pr, SEED, 0).values
        other_path = sample_bessel_path(g, pr, SEED, 1).values
        other_stream = sample_bessel_path(g, pr, SeedSpec(SEED.master_seed, 9), 0).values
        assert not np.array_equal(base, other_path)
        assert not np.array_equal(base, other_stream)

    def test_order_independent(self):
        # sampling path 7 alone equals sampling it after paths 0..6
        g = build_grid(1.0, 20)
        pr = Params(0.5, 0.25)
        alone = sample_bessel_path(g, pr, SEED, 7).values
        for i in range(7):
            sample_bessel_path(g, pr, SEED, i)
        again = sample_bessel_path(g, pr, SEED, 7).values
        assert np.array_equal(alone, again)


class TestMarginalLaw:
    def test_mean_squared_value(self):
        # E of the squared value at t is d*t from the origin
        pr = Params(0.5, 0.0)
        t = 0.7
        sq = sample_terminal_squares(pr, t, 100_000, stream=1)
        se = sq.std() / math.sqrt(sq.size)
        assert abs(sq.mean() - pr.d * t) <= 3.0 * se

    @pytest.mark.parametrize("alpha", [0.3, 0.5, 0.7])
    def test_chi_square_gof_single_step(self, alpha):
        # squared marginal from the origin is Gamma(1-alpha, scale 2t)
        pr = Params(alpha, 0.0)
        sq = sample_terminal_squares(pr, 1.0, 100_000, stream=2)
        edges = stats.gamma.ppf(np.linspace(0.0, 1.0, 41), 1.0 - alpha, scale=2.0)
        counts, _ = np.histogram(sq, bins=edges)
        _, p = stats.chisquare(counts)
        assert p > 0.01

    def test_markov_consistency_refinement(self):
        # marginal at t = 1 is the same on a 1-step and a 64-step grid
        pr = Params(0.35, 0.0)
        coarse = sample_terminal_squares(pr, 1.0, 20_000, stream=3, n_steps=1)
        fine = sample_terminal_squares(pr, 1.0, 20_000, stream=4, n_steps=64)
        _, p = stats.ks_2samp(coarse, fine)
        assert p > 0.01

    def test_self_similarity(self):
        # c^(-1/2) R_(ct) has the law of R_t; compare at c = 4
        pr = Params(0.5, 0.0)
        at_4 = sample_terminal_squares(pr, 4.0, 20_000, stream=5) / 4.0
        at_1 = sample_terminal_squares(pr, 1.0, 20_000, stream=6)
        _, p = stats.ks_2samp(at_4, at_1)
        assert p > 0.01

    def test_rejects_nonpositive_steps(self):
        pr = Params(0.5, 0.0)
        grid = TimeGrid(times=np.array([0.0, 0.5, 1.0]))
        # grids are validated at construction; a hand-built bad array cannot
        # pass TimeGrid, so only the happy path reaches the sampler
        path = sample_bessel_path(grid, pr, SEED)
        assert path.values.shape == (3,)


class TestReinforcement:
    def test_p_zero_is_identity(self):
        pr = Params(0.5, 0.0)
        g = build_grid(1.0, 100)
        base = sample_bessel_path(g, pr, SEED, 0)
        hat = reinforce_path(base, pr)
        assert np.array_equal(hat.values, base.values)
        assert np.array_equal(hat.grid.times, base.grid.times)
        assert hat.kind == "reinforced-bessel"

    def test_grid_mapping_and_values(self):
        pr = Params(0.5, 0.25)
        g = build_grid(1.0, 64)
        base = sample_bessel_path(g, pr, SEED, 1)
        hat = reinforce_path(base, pr)
        q = pr.one_minus_2p
        np.testing.assert_allclose(hat.grid.times, g.times ** (1.0 / q), rtol=1e-14)
        k = 40
        t = hat.grid.times[k]
        want = t ** pr.p * base.values[k] / math.sqrt(q)
        assert hat.values[k] == pytest.approx(want, rel=1e-14)
        assert hat.values[0] == 0.0

    def test_one_point_law(self):
        # the reinforced value at s has the closed-form one-point density
        pr = Params(0.5, 0.25)
        g = build_grid(1.0, 32)
        seed = SeedSpec(SEED.master_seed, 7)
        vals = np.empty(5000)
        for i in range(vals.size):
            vals[i] = reinforce_path(sample_bessel_path(g, pr, seed, i), pr).values[-1]
        _, p = stats.ks_1samp(vals, lambda x: reinforced_cdf(x, 1.0, pr))
        assert p > 0.01
        # and the second moment is d*s/(1-2p)
        se = (vals ** 2).std() / math.sqrt(vals.size)
        assert abs((vals ** 2).mean() - pr.d / pr.one_minus_2p) <= 3.0 * se

    def test_mapped_step_bound(self):
        # for p = 0.25 the mapped grid's steps on [t_max/2, t_max] stay
        # within 2x the uniform base step
        pr = Params(0.5, 0.25)
        g = build_grid(1.0, 1000)
        mapped = g.times ** (1.0 / pr.one_minus_2p)
        steps = np.diff(mapped)
        tail = steps[mapped[1:] >= 0.5]
        assert tail.max() <= 2.0 * (g.times[1] - g.times[0]) * (1.0 + 1e-12)

    def test_rejects_wrong_kind(self):
        pr = Params(0.5, 0.25)
        g = build_grid(1.0, 10)
        base = sample_bessel_path(g, pr, SEED)
        hat = reinforce_path(base, pr)
        with pytest.raises(ValueError):
            reinforce_path(hat, pr)
