"""Velocity field and ODE transport against closed-form and FD oracles."""

from __future__ import annotations

import io
import math

import numpy as np
import pytest

from gif_lab.errors import (
    DegenerateTimeError,
    InvalidParamError,
    NonFiniteStateError,
    OutOfRangeError,
    SizeMismatchError,
)
from gif_lab.flow import (
    FlowContext,
    Trajectory,
    integrate,
    integrate_augmented,
    velocity,
    velocity_dt,
    velocity_jacobian,
)
from gif_lab.schedules import (
    FollmerSchedule,
    LinearSchedule,
    TrigSchedule,
    VESchedule,
    VPSchedule,
)
from gif_lab.targets import (
    denoiser,
    gaussian_target,
    marginal_log_density,
    mixture_target,
    score,
)

from oracles import (
    central_diff,
    gaussian_flow_logdet,
    gaussian_flow_state,
    jacobian_fd,
)


def _gmm8():
    angles = [2.0 * (j - 1) * math.pi / 8.0 for j in range(1, 9)]
    means = [[12.0 * math.sin(a), 12.0 * math.cos(a)] for a in angles]
    return mixture_target(weights=[1.0 / 8] * 8, means=means, sigma=0.03)


@pytest.fixture
def gmm2_ctx():
    target = mixture_target(weights=[0.3, 0.7], means=[[-2.0, 0.0], [2.0, 1.0]],
                            sigma=0.5)
    return FlowContext(sched=LinearSchedule(), target=target)


@pytest.fixture
def gauss_ctx():
    return FlowContext(sched=LinearSchedule(),
                       target=gaussian_target(mean=[0.3, -0.2], var=0.64))


class TestVelocity:
    def test_gaussian_closed_form(self):
        target = gaussian_target(mean=[0.3, -0.2], var=0.64)
        for sched in [LinearSchedule(), TrigSchedule(), VESchedule(sigma_max=2.0),
                      VPSchedule(alpha0=0.8, p=1.0), FollmerSchedule()]:
            ctx = FlowContext(sched=sched, target=target)
            for t in [0.0, 0.3, 0.8, 1.0]:
                p = sched.eval(t)
                c2 = p.a ** 2 + 0.64 * p.b ** 2
                dc_over_c = (sched.da_a(t) + 0.64 * sched.db_b(t)) / c2
                x = np.array([0.9, 1.4])
                m = np.asarray(target.means[0])
                expect = p.db * m + dc_over_c * (x - p.b * m)
                got = velocity(ctx, t, x)
                assert got == pytest.approx(expect, abs=1e-10), (sched.describe(), t)

    def test_follmer_fixes_standard_normal(self):
        ctx = FlowContext(sched=FollmerSchedule(),
                          target=gaussian_target(mean=[0.0, 0.0], var=1.0))
        rng = np.random.default_rng(3)
        xs = rng.normal(size=(32, 2)) * 1.5
        for t in [0.0, 0.25, 0.5, 0.9, 0.999, 1.0]:
            v = velocity(ctx, t, xs)
            assert np.max(np.abs(v)) <= 1e-10

    def test_score_and_denoiser_forms_agree(self):
        ctx = FlowContext(sched=LinearSchedule(), target=_gmm8())
        t = 0.5
        p = ctx.sched.eval(t)
        rng = np.random.default_rng(5)
        comp = rng.integers(0, 8, size=16)
        xs = p.b * np.asarray(ctx.target.means)[comp] \
            + math.sqrt(p.a ** 2 + p.b ** 2 * 0.03 ** 2) * rng.normal(size=(16, 2))
        got = velocity(ctx, t, xs)
        ra = p.da / p.a
        alt = ra * xs + (p.db - ra * p.b) * denoiser(ctx.target, ctx.sched, t, xs)
        assert np.max(np.abs(got - alt)) <= 1e-12 * (1.0 + np.max(np.abs(got)))

    def test_batch_matches_single(self, gmm2_ctx):
        xs = np.array([[0.1, 0.2], [2.0, -1.0], [0.0, 0.0]])
        batch = velocity(gmm2_ctx, 0.4, xs)
        for i, x in enumerate(xs):
            assert batch[i] == pytest.approx(velocity(gmm2_ctx, 0.4, x))

    def test_time_domain(self, gmm2_ctx):
        with pytest.raises(OutOfRangeError):
            velocity(gmm2_ctx, -0.1, np.zeros(2))
        with pytest.raises(OutOfRangeError):
            velocity(gmm2_ctx, 1.1, np.zeros(2))

    def test_early_stop_blocks_terminal_time(self):
        target = mixture_target(weights=[1.0], means=[[0.0, 0.0]], sigma=0.5)
        ctx = FlowContext(sched=LinearSchedule(), target=target, early_stop=0.1)
        velocity(ctx, 0.9, np.zeros(2))
        with pytest.raises(DegenerateTimeError):
            velocity(ctx, 0.95, np.zeros(2))

    def test_bad_early_stop(self):
        target = gaussian_target(mean=[0.0], var=1.0)
        with pytest.raises(InvalidParamError):
            FlowContext(sched=LinearSchedule(), target=target, early_stop=0.7)


class TestVelocityJacobian:
    def test_matches_fd(self, gmm2_ctx):
        for t in [0.0, 0.35, 0.7, 1.0]:
            for x in [np.array([0.2, 0.1]), np.array([1.5, 0.8])]:
                J = velocity_jacobian(gmm2_ctx, t, x)
                J_fd = jacobian_fd(lambda y: velocity(gmm2_ctx, t, y), x, h=1e-6)
                assert J == pytest.approx(J_fd, abs=2e-6)
                assert J == pytest.approx(J.T, abs=1e-12)

    def test_gaussian_exact_scalar_matrix(self, gauss_ctx):
        beta = 1.0 / 0.64
        sched = gauss_ctx.sched
        for t in [0.0, 0.2, 0.5, 0.9, 1.0]:
            p = sched.eval(t)
            g = (beta * sched.da_a(t) + sched.db_b(t)) / (beta * p.a ** 2 + p.b ** 2)
            J = velocity_jacobian(gauss_ctx, t, np.array([0.4, -1.0]))
            assert J == pytest.approx(g * np.eye(2), abs=1e-12 * max(1.0, abs(g)))

    def test_batch_shape(self, gmm2_ctx):
        xs = np.zeros((5, 2))
        J = velocity_jacobian(gmm2_ctx, 0.5, xs)
        assert J.shape == (5, 2, 2)


class TestVelocityDt:
    def test_matches_fd_in_time(self, gmm2_ctx):
        for t in [0.3, 0.5, 0.75]:
            for x in [np.array([0.4, 0.2]), np.array([-1.0, 0.6])]:
                got = velocity_dt(gmm2_ctx, t, x)
                fd = np.array([
                    central_diff(lambda u: velocity(gmm2_ctx, u, x)[i], t, h=1e-5)
                    for i in range(2)
                ])
                assert got == pytest.approx(fd, abs=2e-5, rel=2e-5)

    def test_rejects_endpoints(self, gmm2_ctx):
        for t in [0.0, 1.0]:
            with pytest.raises((OutOfRangeError, DegenerateTimeError)):
                velocity_dt(gmm2_ctx, t, np.zeros(2))


class TestIntegrate:
    def test_gaussian_transport_matches_affine_law(self):
        target = gaussian_target(mean=[0.3, -0.2], var=0.64)
        x0 = np.array([1.2, -0.7])
        for sched in [LinearSchedule(), FollmerSchedule(), TrigSchedule(),
                      VESchedule(sigma_max=2.0), VPSchedule(alpha0=0.8, p=1.0)]:
            ctx = FlowContext(sched=sched, target=target)
            traj = integrate(ctx, x0, 0.0, 1.0, steps=256)
            expect = gaussian_flow_state([0.3, -0.2], 0.64, sched, 0.0, 1.0, x0)
            err = np.linalg.norm(traj.final_state - expect)
            assert err <= 1e-6 * (1.0 + np.linalg.norm(expect)), sched.describe()

    def test_partial_interval(self):
        target = gaussian_target(mean=[1.0, 1.0], var=0.25)
        ctx = FlowContext(sched=TrigSchedule(), target=target)
        x0 = np.array([0.5, -0.5])
        traj = integrate(ctx, x0, 0.2, 0.7, steps=200)
        expect = gaussian_flow_state([1.0, 1.0], 0.25, ctx.sched, 0.2, 0.7, x0)
        assert traj.final_state == pytest.approx(expect, abs=1e-7)

    def test_forward_then_reverse_round_trip(self, gmm2_ctx):
        rng = np.random.default_rng(9)
        x0 = rng.normal(size=(8, 2))
        fwd = integrate(gmm2_ctx, x0, 0.0, 1.0, steps=256)
        back = integrate(gmm2_ctx, fwd.final_state, 0.0, 1.0, steps=256,
                         direction="reverse")
        assert np.max(np.linalg.norm(back.final_state - x0, axis=1)) <= 1e-4

    def test_record_final_matches_all(self, gmm2_ctx):
        x0 = np.array([0.3, 0.3])
        full = integrate(gmm2_ctx, x0, 0.0, 1.0, steps=64)
        last = integrate(gmm2_ctx, x0, 0.0, 1.0, steps=64, record="final")
        assert last.states.shape[0] == 2
        assert last.final_state == pytest.approx(full.final_state, abs=0.0)

    def test_custom_field_override(self, gmm2_ctx):
        # constant unit field moves the state by the elapsed time exactly
        traj = integrate(gmm2_ctx, np.zeros(2), 0.0, 1.0, steps=16,
                         field=lambda t, x: np.ones_like(x))
        assert traj.final_state == pytest.approx([1.0, 1.0], abs=1e-13)

    def test_blowup_reports_step_index(self, gmm2_ctx):
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(NonFiniteStateError) as err:
                integrate(gmm2_ctx, np.array([1.0, 1.0]), 0.0, 1.0, steps=8,
                          field=lambda t, x: x * 1e200)
        assert err.value.step >= 0

    def test_argument_validation(self, gmm2_ctx):
        with pytest.raises(OutOfRangeError):
            integrate(gmm2_ctx, np.zeros(2), 0.8, 0.2, steps=16)
        with pytest.raises(InvalidParamError):
            integrate(gmm2_ctx, np.zeros(2), 0.0, 1.0, steps=0)
        with pytest.raises(InvalidParamError):
            integrate(gmm2_ctx, np.zeros(2), 0.0, 1.0, steps=16, direction="sideways")
        with pytest.raises(SizeMismatchError):
            integrate(gmm2_ctx, np.zeros(3), 0.0, 1.0, steps=16)

    def test_early_stop_caps_forward_interval(self):
        target = gaussian_target(mean=[0.0], var=1.0)
        ctx = FlowContext(sched=LinearSchedule(), target=target, early_stop=0.05)
        integrate(ctx, np.zeros(1), 0.0, 0.95, steps=8)
        with pytest.raises(OutOfRangeError):
            integrate(ctx, np.zeros(1), 0.0, 1.0, steps=8)


class TestIntegrateAugmented:
    def test_gaussian_jacobian_and_logdet(self):
        target = gaussian_target(mean=[0.5, 0.5], var=0.49)
        ctx = FlowContext(sched=LinearSchedule(), target=target)
        x0 = np.array([0.1, 0.9])
        traj = integrate_augmented(ctx, x0, 0.0, 1.0, steps=256,
                                   with_logdensity=True, init_logdens=0.0)
        scale = math.exp(gaussian_flow_logdet([0.5, 0.5], 0.49, ctx.sched,
                                              0.0, 1.0, 2) / 2)
        assert traj.final_jacobian == pytest.approx(scale * np.eye(2), abs=1e-7)
        expect_logdens = -gaussian_flow_logdet([0.5, 0.5], 0.49, ctx.sched, 0.0, 1.0, 2)
        assert traj.final_logdens == pytest.approx(expect_logdens, abs=1e-7)

    def test_jacobian_matches_flow_map_fd(self, gmm2_ctx):
        x0 = np.array([0.4, -0.1])
        traj = integrate_augmented(gmm2_ctx, x0, 0.0, 0.8, steps=128)

        def flow_map(y):
            return integrate(gmm2_ctx, y, 0.0, 0.8, steps=128,
                             record="final").final_state

        J_fd = jacobian_fd(flow_map, x0, h=1e-6)
        assert traj.final_jacobian == pytest.approx(J_fd, abs=5e-6)

    def test_density_transport_identity(self, gmm2_ctx):
        # log p_1(X_1) = log p_0(x_0) - log det J_{0->1}
        rng = np.random.default_rng(12)
        x0 = rng.normal(size=(16, 2))
        ld0 = marginal_log_density(gmm2_ctx.target, gmm2_ctx.sched, 0.0, x0)
        traj = integrate_augmented(gmm2_ctx, x0, 0.0, 1.0, steps=1024,
                                   with_logdensity=True, init_logdens=ld0)
        ld1 = marginal_log_density(gmm2_ctx.target, gmm2_ctx.sched, 1.0,
                                   traj.final_state)
        sign, logdet = np.linalg.slogdet(traj.final_jacobian)
        assert np.all(sign > 0)
        assert traj.final_logdens == pytest.approx(ld0 - logdet, abs=1e-6)
        assert np.quantile(np.abs(traj.final_logdens - ld1), 0.9) <= 1e-3

    def test_reverse_jacobian_inverts_forward(self, gmm2_ctx):
        x0 = np.array([0.2, 0.6])
        fwd = integrate_augmented(gmm2_ctx, x0, 0.0, 1.0, steps=512)
        back = integrate_augmented(gmm2_ctx, fwd.final_state, 0.0, 1.0, steps=512,
                                   direction="reverse")
        prod = back.final_jacobian @ fwd.final_jacobian
        assert prod == pytest.approx(np.eye(2), abs=1e-4)


class TestTrajectoryCsv:
    def test_layout_and_determinism(self, gmm2_ctx):
        traj = integrate_augmented(gmm2_ctx, np.array([0.1, 0.2]), 0.0, 1.0, steps=4,
                                   with_logdensity=True, init_logdens=0.0)
        buf1, buf2 = io.StringIO(), io.StringIO()
        traj.write_csv(buf1)
        traj.write_csv(buf2)
        assert buf1.getvalue() == buf2.getvalue()
        lines = buf1.getvalue().strip().split("\n")
        assert lines[0] == "t,x_1,x_2,logdens,jac_11,jac_12,jac_21,jac_22"
        assert len(lines) == 6
        first = lines[1].split(",")
        assert float(first[0]) == 0.0
        assert float(first[1]) == pytest.approx(0.1)

    def test_timestamp_header_optional(self, gmm2_ctx):
        traj = integrate(gmm2_ctx, np.zeros(2), 0.0, 1.0, steps=2)
        buf = io.StringIO()
        traj.write_csv(buf, timestamp="2026-01-01T00:00:00")
        assert buf.getvalue().startswith("# generated: 2026-01-01T00:00:00\n")

    def test_reverse_times_are_physical(self, gmm2_ctx):
        traj = integrate(gmm2_ctx, np.zeros(2), 0.0, 1.0, steps=2,
                         direction="reverse")
        buf = io.StringIO()
        traj.write_csv(buf)
        rows = buf.getvalue().strip().split("\n")[1:]
        ts = [float(r.split(",")[0]) for r in rows]
        assert ts == [1.0, 0.5, 0.0]
