"""Sampling determinism, Wasserstein distances vs brute force, regression."""

from __future__ import annotations

import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from gif_lab.errors import (
    DegenerateInputError,
    InvalidParamError,
    SizeMismatchError,
    TooLargeError,
)
from gif_lab.metrics import (
    ParticleCloud,
    linear_fit,
    sample_gaussian,
    sample_interpolant,
    sample_source,
    sample_target,
    w2,
)
from gif_lab.schedules import LinearSchedule, ShiftedLinearSchedule
from gif_lab.targets import gaussian_target, mixture_target

from oracles import w2_bruteforce


@pytest.fixture
def gmm2():
    return mixture_target(weights=[0.25, 0.75], means=[[-3.0, 0.0], [3.0, 0.0]],
                          sigma=0.5)


class TestSamplingDeterminism:
    def test_same_seed_same_cloud(self, gmm2):
        a = sample_target(gmm2, n=64, seed=123)
        b = sample_target(gmm2, n=64, seed=123)
        assert np.array_equal(a.points, b.points)

    def test_different_seed_differs(self, gmm2):
        a = sample_target(gmm2, n=64, seed=1)
        b = sample_target(gmm2, n=64, seed=2)
        assert not np.array_equal(a.points, b.points)

    def test_prefix_stability(self, gmm2):
        # particle i depends only on (seed, i), never on n
        big = sample_target(gmm2, n=100, seed=9)
        small = sample_target(gmm2, n=40, seed=9)
        assert np.array_equal(big.points[:40], small.points)

    def test_source_is_explicit_coupling(self, gmm2):
        sched = ShiftedLinearSchedule(zeta=0.2)
        n, seed = 32, 5
        src = sample_source(gmm2, sched, n=n, seed=seed)
        z = sample_gaussian(gmm2.dim, n=n, seed=seed)
        x1 = sample_target(gmm2, n=n, seed=seed)
        expect = sched.a0 * z.points + sched.b0 * x1.points
        assert np.allclose(src.points, expect, atol=0.0)

    def test_validation(self, gmm2):
        with pytest.raises(InvalidParamError):
            sample_target(gmm2, n=0, seed=1)
        with pytest.raises(InvalidParamError):
            sample_target(gmm2, n=8, seed=-3)


class TestSamplingLaw:
    def test_gaussian_samples_pass_ks(self):
        pts = sample_gaussian(1, n=4000, seed=77).points[:, 0]
        stat = stats.kstest(pts, "norm")
        assert stat.pvalue > 1e-3

    def test_target_moments(self, gmm2):
        pts = sample_target(gmm2, n=20_000, seed=4).points
        mean = gmm2.weights @ gmm2.means
        assert pts.mean(axis=0) == pytest.approx(mean, abs=0.1)
        comp_freq = np.mean(pts[:, 0] > 0.0)
        assert comp_freq == pytest.approx(0.75, abs=0.02)

    def test_linear_source_is_standard_normal(self, gmm2):
        pts = sample_source(gmm2, LinearSchedule(), n=4000, seed=8).points
        assert pts.mean(axis=0) == pytest.approx([0.0, 0.0], abs=0.08)
        assert np.cov(pts.T) == pytest.approx(np.eye(2), abs=0.08)

    def test_interpolant_second_moment(self):
        target = gaussian_target(mean=[1.0, -1.0], var=0.25)
        sched = LinearSchedule()
        t = 0.6
        pts = sample_interpolant(target, sched, t, n=30_000, seed=3).points
        p = sched.eval(t)
        expect_mean = p.b * np.array([1.0, -1.0])
        expect_var = p.a ** 2 + 0.25 * p.b ** 2
        assert pts.mean(axis=0) == pytest.approx(expect_mean, abs=0.05)
        assert np.var(pts, axis=0) == pytest.approx([expect_var] * 2, rel=0.08)


class TestExactW2:
    def test_singletons(self):
        a = np.array([[0.0, 0.0]])
        b = np.array([[3.0, 4.0]])
        assert w2(a, b) == pytest.approx(5.0)

    def test_translation(self):
        rng = np.random.default_rng(2)
        a = rng.normal(size=(7, 3))
        shift = np.array([1.0, -2.0, 0.5])
        assert w2(a, a + shift) == pytest.approx(np.linalg.norm(shift), abs=1e-12)

    def test_identical_clouds(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(50, 2))
        assert w2(a, a.copy()) == pytest.approx(0.0, abs=1e-14)

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_matches_bruteforce(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(6, 2))
        b = rng.normal(size=(6, 2)) + rng.normal(scale=2.0, size=2)
        assert w2(a, b) == pytest.approx(w2_bruteforce(a, b), abs=1e-12)

    def test_accepts_particle_clouds(self, gmm2):
        a = sample_target(gmm2, n=16, seed=0)
        b = sample_target(gmm2, n=16, seed=1)
        assert w2(a, b) == pytest.approx(w2(a.points, b.points))

    def test_size_mismatch(self):
        with pytest.raises(SizeMismatchError):
            w2(np.zeros((4, 2)), np.zeros((5, 2)))

    def test_dim_mismatch(self):
        with pytest.raises(SizeMismatchError):
            w2(np.zeros((4, 2)), np.zeros((4, 3)))

    def test_size_cap(self):
        big = np.zeros((4097, 1))
        with pytest.raises(TooLargeError):
            w2(big, big)


class TestSlicedW2:
    def test_1d_equals_exact(self):
        rng = np.random.default_rng(5)
        a = rng.normal(size=(40, 1))
        b = rng.normal(size=(40, 1)) + 0.7
        s = w2(a, b, method="sliced", n_projections=8)
        assert s == pytest.approx(w2(a, b), abs=1e-12)

    def test_never_exceeds_exact(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            a = rng.normal(size=(64, 2))
            b = rng.normal(size=(64, 2)) * 1.4 + 0.3
            s = w2(a, b, method="sliced", n_projections=32, seed=seed)
            assert s <= w2(a, b) + 1e-12

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(6)
        a = rng.normal(size=(30, 2))
        b = rng.normal(size=(30, 2))
        s1 = w2(a, b, method="sliced", n_projections=16, seed=11)
        s2 = w2(a, b, method="sliced", n_projections=16, seed=11)
        assert s1 == s2
        s3 = w2(a, b, method="sliced", n_projections=16, seed=12)
        assert s1 != s3

    def test_unequal_sizes_quantile_value(self):
        # hand value: uniform({0,1}) vs uniform({0,0.5,1}) has W2^2 = 1/12
        a = np.array([[0.0], [1.0]])
        b = np.array([[0.0], [0.5], [1.0]])
        s = w2(a, b, method="sliced", n_projections=4)
        assert s == pytest.approx(math.sqrt(1.0 / 12.0), abs=1e-12)

    def test_validates_projection_count(self):
        with pytest.raises(InvalidParamError):
            w2(np.zeros((4, 2)), np.zeros((4, 2)), method="sliced", n_projections=0)

    def test_unknown_method(self):
        with pytest.raises(InvalidParamError):
            w2(np.zeros((4, 2)), np.zeros((4, 2)), method="swd")


@given(seed=st.integers(min_value=0, max_value=10_000))
@settings(max_examples=25, deadline=None)
def test_exact_w2_triangle_inequality(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (rng.normal(size=(5, 2)) for _ in range(3))
    assert w2(a, c) <= w2(a, b) + w2(b, c) + 1e-9


class TestLinearFit:
    def test_recovers_exact_line(self):
        xs = np.linspace(0.0, 1.0, 9)
        ys = 2.5 * xs - 0.7
        fit = linear_fit(xs, ys)
        assert fit.slope == pytest.approx(2.5, abs=1e-12)
        assert fit.intercept == pytest.approx(-0.7, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
        assert fit.n == 9

    def test_constant_ys(self):
        fit = linear_fit([0.0, 1.0, 2.0], [0.1, 0.1, 0.1])
        assert fit.slope == 0.0
        assert fit.r_squared == 0.0
        assert fit.intercept == pytest.approx(0.1)

    def test_noisy_r2_below_one(self):
        rng = np.random.default_rng(1)
        xs = np.linspace(0, 1, 50)
        ys = xs + rng.normal(scale=0.1, size=50)
        fit = linear_fit(xs, ys)
        assert 0.5 < fit.r_squared < 1.0

    def test_identical_xs_rejected(self):
        with pytest.raises(DegenerateInputError):
            linear_fit([1.0, 1.0, 1.0], [0.0, 1.0, 2.0])

    def test_needs_two_points(self):
        with pytest.raises(DegenerateInputError):
            linear_fit([1.0], [2.0])


class TestParticleCloudCsv:
    def test_round_trip(self, gmm2):
        cloud = sample_target(gmm2, n=10, seed=3, label="demo")
        buf = io.StringIO()
        cloud.write_csv(buf)
        text = buf.getvalue()
        assert text.splitlines()[0] == "x1,x2"
        back = ParticleCloud.read_csv(io.StringIO(text))
        assert np.array_equal(back.points, cloud.points)

    def test_rewrite_is_byte_identical(self, gmm2):
        cloud = sample_target(gmm2, n=10, seed=3)
        b1, b2 = io.StringIO(), io.StringIO()
        cloud.write_csv(b1)
        cloud.write_csv(b2)
        assert b1.getvalue() == b2.getvalue()

    def test_timestamp_line_skipped_on_read(self, gmm2):
        cloud = sample_target(gmm2, n=4, seed=0)
        buf = io.StringIO()
        cloud.write_csv(buf, timestamp="2026-02-02T10:00:00")
        assert buf.getvalue().startswith("# generated: ")
        back = ParticleCloud.read_csv(io.StringIO(buf.getvalue()))
        assert np.array_equal(back.points, cloud.points)
