"""Transport velocity field and fixed-step RK4 integration of its ODE.

The velocity comes in two algebraically identical dressings.  At t = 0 it
is assembled from the posterior mean (the denoiser), because the score
dressing divides by b_0 which may vanish; at t > 0 it is assembled from
the score, which covers the terminal time where a_1 = 0.  The Jacobian is
assembled in a third dressing that never divides by a_t or b_t at all:

    grad v = (a da + sigma^2 b db)/c^2 * I
           + (a^2 * b db - a da * b^2)/c^4 * spread(mu)

where spread(mu) is the responsibility-weighted covariance of the
component means and c^2 = a^2 + sigma^2 b^2.  That form is finite and
correct on the whole of [0, 1], which is what the augmented integrator
and the envelope experiments rely on.

States are batched: a point is (d,), a cloud is (n, d); all integrators
advance whole clouds per step.  Reverse-time transport solves
dX*/dtau = -v(1 - tau, X*) on the integrator clock tau in [0, 1].
"""

from __future__ import annotations

import csv
import dataclasses
import math

import numpy as np

from .errors import (
    DegenerateTimeError,
    InvalidParamError,
    NonFiniteError,
    NonFiniteStateError,
    OutOfRangeError,
    SizeMismatchError,
)
from .schedules import Schedule
from .targets import Target, _as_batch, _stats, posterior_moments

__all__ = [
    "FlowContext",
    "Trajectory",
    "velocity",
    "velocity_jacobian",
    "velocity_dt",
    "integrate",
    "integrate_augmented",
]


@dataclasses.dataclass(frozen=True)
class FlowContext:
    """Pairs a schedule with a target; early_stop shrinks the time horizon.

    With early_stop = tl the forward flow runs on [0, 1 - tl].  The
    default 0 is safe because targets carry sigma > 0, which keeps the
    terminal marginal non-degenerate.
    """

    sched: Schedule
    target: Target
    early_stop: float = 0.0

    def __post_init__(self):
        es = self.early_stop
        if not (isinstance(es, (int, float)) and math.isfinite(es) and 0.0 <= es < 0.5):
            raise InvalidParamError(f"early_stop must lie in [0, 0.5), got {es!r}")

    @property
    def t_max(self) -> float:
        return 1.0 - self.early_stop


def _check_flow_time(ctx: FlowContext, t: float) -> float:
    t = float(t)
    if not (math.isfinite(t) and 0.0 <= t <= 1.0):
        raise OutOfRangeError(f"time must lie in [0, 1], got {t!r}")
    if t > ctx.t_max:
        raise DegenerateTimeError(
            f"time {t} exceeds the early-stop horizon {ctx.t_max}")
    return t


def _velocity_core(ctx: FlowContext, t: float, xb: np.ndarray, mu_bar: np.ndarray,
                   p, c2: float):
    """Velocity at a batch given precomputed posterior mean over components."""
    sigma = ctx.target.sigma
    if t == 0.0:
        ra = p.da / p.a
        denoise = (p.a ** 2 / c2) * mu_bar + (sigma ** 2 * p.b / c2) * xb
        return ra * xb + (p.db - ra * p.b) * denoise
    rb = p.db / p.b
    coeff = rb * p.a ** 2 - ctx.sched.da_a(t)
    return rb * xb - coeff * (xb - p.b * mu_bar) / c2


def _jacobian_core(ctx: FlowContext, t: float, spread: np.ndarray, p, c2: float):
    sched, sigma = ctx.sched, ctx.target.sigma
    da_a = sched.da_a(t)
    db_b = sched.db_b(t)
    g1 = (da_a + sigma ** 2 * db_b) / c2
    g2 = (p.a ** 2 * db_b - da_a * p.b ** 2) / c2 ** 2
    eye = np.eye(ctx.target.dim)
    return g1 * eye[None, :, :] + g2 * spread


def _velocity_batch(ctx: FlowContext, t: float, xb: np.ndarray):
    p, c2, _, mu_bar, _ = _stats(ctx.target, ctx.sched, t, xb, False)
    return _velocity_core(ctx, t, xb, mu_bar, p, c2)


def velocity(ctx: FlowContext, t: float, x):
    """Transport velocity v(t, x); accepts a point (d,) or a cloud (n, d)."""
    t = _check_flow_time(ctx, t)
    xb, single = _as_batch(ctx.target, x)
    out = _velocity_batch(ctx, t, xb)
    return out[0] if single else out


def velocity_jacobian(ctx: FlowContext, t: float, x):
    """Space Jacobian of the velocity, (d, d) per point, symmetric."""
    t = _check_flow_time(ctx, t)
    xb, single = _as_batch(ctx.target, x)
    p, c2, _, _, spread = _stats(ctx.target, ctx.sched, t, xb, True)
    out = _jacobian_core(ctx, t, spread, p, c2)
    return out[0] if single else out


def _velocity_and_jacobian(ctx: FlowContext, t: float, xb: np.ndarray):
    p, c2, _, mu_bar, spread = _stats(ctx.target, ctx.sched, t, xb, True)
    return (_velocity_core(ctx, t, xb, mu_bar, p, c2),
            _jacobian_core(ctx, t, spread, p, c2))


def velocity_dt(ctx: FlowContext, t: float, x):
    """Partial time derivative of the velocity, valid on the open interval.

    Uses the closed-form posterior moments; requires 0 < t < 1 (and within
    the early-stop horizon) since the coefficients divide by a_t and b_t.
    """
    t = float(t)
    if not (0.0 < t < 1.0):
        raise OutOfRangeError(f"velocity_dt needs t in (0, 1), got {t!r}")
    _check_flow_time(ctx, t)
    xb, single = _as_batch(ctx.target, x)
    p = ctx.sched.eval(t)
    a, b, da, db, d2a, d2b = p.a, p.b, p.da, p.db, p.d2a, p.d2b
    ra, rb = da / a, db / b
    M1, M2, M2c, M3 = posterior_moments(ctx.target, ctx.sched, t, xb)
    q1 = d2a / a - ra ** 2
    q2 = (a ** 2 * (d2b / b) - da * a * rb - d2a * a + da ** 2) * (b / a ** 2)
    q3 = (b ** 2 / a ** 2) * (rb - ra) * (rb - 2.0 * ra)
    q4 = (b ** 3 / a ** 2) * (rb - ra) ** 2
    out = (q1 * xb + q2 * M1 + q3 * np.einsum("nij,nj->ni", M2c, xb)
           - q4 * (M3 - M2[:, None] * M1))
    return out[0] if single else out


# ---------------------------------------------------------------------------
# trajectories and integrators


@dataclasses.dataclass
class Trajectory:
    """Recorded RK4 path: times on the integrator clock, batched states.

    states is (T, n, d); jac (T, n, d, d) and logdens (T, n) are present
    when the augmented integrator was asked for them.  final_* properties
    squeeze the batch axis back out when the input was a single point.
    """

    times: np.ndarray
    states: np.ndarray
    direction: str
    single: bool
    jac: np.ndarray | None = None
    logdens: np.ndarray | None = None

    @property
    def physical_times(self) -> np.ndarray:
        return 1.0 - self.times if self.direction == "reverse" else self.times

    def _squeeze(self, arr):
        return arr[0] if self.single else arr

    @property
    def final_state(self):
        return self._squeeze(self.states[-1])

    @property
    def final_jacobian(self):
        if self.jac is None:
            raise InvalidParamError("trajectory was integrated without a Jacobian")
        return self._squeeze(self.jac[-1])

    @property
    def final_logdens(self):
        if self.logdens is None:
            raise InvalidParamError("trajectory was integrated without log-density")
        return self._squeeze(self.logdens[-1])

    def write_csv(self, path_or_buf, particle: int = 0, timestamp: str | None = None):
        """One row per recorded time: t, coordinates, then optional columns.

        t is physical time (decreasing for reverse runs).  Optional columns
        are logdens and the row-major Jacobian entries jac_ij.
        """
        d = self.states.shape[2]
        header = ["t"] + [f"x_{i + 1}" for i in range(d)]
        if self.logdens is not None:
            header.append("logdens")
        if self.jac is not None:
            header += [f"jac_{i + 1}{j + 1}" for i in range(d) for j in range(d)]

        def emit(fh):
            if timestamp is not None:
                fh.write(f"# generated: {timestamp}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for idx, t in enumerate(self.physical_times):
                row = [repr(float(t))]
                row += [repr(float(v)) for v in self.states[idx, particle]]
                if self.logdens is not None:
                    row.append(repr(float(self.logdens[idx, particle])))
                if self.jac is not None:
                    row += [repr(float(v)) for v in self.jac[idx, particle].ravel()]
                writer.writerow(row)

        if hasattr(path_or_buf, "write"):
            emit(path_or_buf)
        else:
            with open(path_or_buf, "w", encoding="utf-8", newline="") as fh:
                emit(fh)


def _validate_span(ctx: FlowContext, t_from: float, t_to: float, steps: int,
                   direction: str, record: str):
    if direction not in ("forward", "reverse"):
        raise InvalidParamError(f"direction must be forward or reverse, got {direction!r}")
    if record not in ("all", "final"):
        raise InvalidParamError(f"record must be all or final, got {record!r}")
    if not (isinstance(steps, (int, np.integer)) and steps >= 1):
        raise InvalidParamError(f"steps must be a positive integer, got {steps!r}")
    t_from, t_to = float(t_from), float(t_to)
    if not (math.isfinite(t_from) and math.isfinite(t_to) and t_from < t_to):
        raise OutOfRangeError(f"need from < to, got {t_from!r} .. {t_to!r}")
    if direction == "forward":
        if t_from < 0.0 or t_to > ctx.t_max:
            raise OutOfRangeError(
                f"forward span must lie in [0, {ctx.t_max}], got [{t_from}, {t_to}]")
    else:
        # reverse clock tau covers physical times 1 - tau
        if t_from < ctx.early_stop or t_to > 1.0:
            raise OutOfRangeError(
                f"reverse span must lie in [{ctx.early_stop}, 1], got [{t_from}, {t_to}]")
    return t_from, t_to


def _directed_field(ctx: FlowContext, direction: str, field):
    if field is None:
        base = lambda t, xb: _velocity_batch(ctx, t, xb)
    else:
        base = field
    if direction == "forward":
        return base
    return lambda tau, xb: -np.asarray(base(1.0 - tau, xb), dtype=float)


def integrate(ctx: FlowContext, x0, t_from: float, t_to: float, steps: int,
              direction: str = "forward", record: str = "all", field=None) -> Trajectory:
    """Fixed-step RK4 transport of a point or cloud along the velocity.

    field overrides the velocity with a callable (t, cloud) -> cloud in
    physical time; the reverse wrapper and sign are applied on top of it.
    """
    t_from, t_to = _validate_span(ctx, t_from, t_to, steps, direction, record)
    xb, single = _as_batch(ctx.target, x0)
    f = _directed_field(ctx, direction, field)
    times = np.linspace(t_from, t_to, steps + 1)
    x = xb.copy()
    keep_all = record == "all"
    recorded = [x.copy()]
    for i in range(steps):
        t0, t1 = times[i], times[i + 1]
        h = t1 - t0
        tm = t0 + 0.5 * h
        k1 = f(t0, x)
        k2 = f(tm, x + 0.5 * h * k1)
        k3 = f(tm, x + 0.5 * h * k2)
        k4 = f(t1, x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise NonFiniteStateError(f"state became non-finite at step {i}", step=i)
        if keep_all:
            recorded.append(x.copy())
    if not keep_all:
        recorded.append(x)
        times = np.array([t_from, t_to])
    return Trajectory(times=times, states=np.stack(recorded), direction=direction,
                      single=single)


def integrate_augmented(ctx: FlowContext, x0, t_from: float, t_to: float, steps: int,
                        direction: str = "forward", record: str = "all",
                        with_logdensity: bool = False, init_logdens=None,
                        field=None, field_jac=None) -> Trajectory:
    """RK4 on the state jointly with its flow-map Jacobian and log-density.

    The Jacobian solves dJ/dt = grad v . J from J = I; the log-density
    solves dl/dt = -tr grad v from init_logdens (default 0).  Custom field
    overrides must come in pairs (field, field_jac), both in physical time.
    """
    t_from, t_to = _validate_span(ctx, t_from, t_to, steps, direction, record)
    if (field is None) != (field_jac is None):
        raise InvalidParamError("field and field_jac must be overridden together")
    xb, single = _as_batch(ctx.target, x0)
    n, d = xb.shape

    if field is None:
        pair = lambda t, xx: _velocity_and_jacobian(ctx, t, xx)
    else:
        pair = lambda t, xx: (np.asarray(field(t, xx), dtype=float),
                              np.asarray(field_jac(t, xx), dtype=float))
    if direction == "forward":
        stage = pair
    else:
        def stage(tau, xx):
            v, J = pair(1.0 - tau, xx)
            return -v, -J

    x = xb.copy()
    J = np.broadcast_to(np.eye(d), (n, d, d)).copy()
    if init_logdens is None:
        ld = np.zeros(n)
    else:
        ld = np.broadcast_to(np.asarray(init_logdens, dtype=float), (n,)).astype(float)
        if not np.all(np.isfinite(ld)):
            raise NonFiniteError("init_logdens contains non-finite entries")

    times = np.linspace(t_from, t_to, steps + 1)
    keep_all = record == "all"
    rec_x, rec_J, rec_ld = [x.copy()], [J.copy()], [ld.copy()]

    def rates(tau, xx, JJ):
        v, G = stage(tau, xx)
        dJ = np.einsum("nij,njk->nik", G, JJ)
        dld = -np.einsum("nii->n", G)
        return v, dJ, dld

    for i in range(steps):
        t0, t1 = times[i], times[i + 1]
        h = t1 - t0
        tm = t0 + 0.5 * h
        k1 = rates(t0, x, J)
        k2 = rates(tm, x + 0.5 * h * k1[0], J + 0.5 * h * k1[1])
        k3 = rates(tm, x + 0.5 * h * k2[0], J + 0.5 * h * k2[1])
        k4 = rates(t1, x + h * k3[0], J + h * k3[1])
        x = x + (h / 6.0) * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        J = J + (h / 6.0) * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        ld = ld + (h / 6.0) * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(J))
                and np.all(np.isfinite(ld))):
            raise NonFiniteStateError(f"augmented state non-finite at step {i}", step=i)
        if keep_all:
            rec_x.append(x.copy())
            rec_J.append(J.copy())
            rec_ld.append(ld.copy())
    if not keep_all:
        rec_x.append(x)
        rec_J.append(J)
        rec_ld.append(ld)
        times = np.array([t_from, t_to])
    return Trajectory(times=times, states=np.stack(rec_x), direction=direction,
                      single=single, jac=np.stack(rec_J),
                      logdens=np.stack(rec_ld) if with_logdensity else None)
