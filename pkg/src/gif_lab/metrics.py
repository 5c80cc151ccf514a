"""Particle sampling, Wasserstein-2 distances, and least-squares fits.

Sampling is counter-based: every particle draws from its own Philox stream
keyed by ``(seed, domain, particle_index)``, so particle ``i`` of a cloud is
the same no matter how many particles are requested and independent draws
(target, source noise, projections, perturbations) never share a stream.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import IO, Union

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .errors import (
    DegenerateInputError,
    InvalidParamError,
    NonFiniteError,
    SizeMismatchError,
    TooLargeError,
)
from .schedules import Schedule
from .targets import Target

__all__ = [
    "FitReport",
    "NOISE_DOMAIN",
    "ParticleCloud",
    "keyed_generator",
    "linear_fit",
    "sample_gaussian",
    "sample_interpolant",
    "sample_source",
    "sample_target",
    "w2",
]

_TARGET_DOMAIN = 1
_SOURCE_DOMAIN = 2
_PROJ_DOMAIN = 3
NOISE_DOMAIN = 4

_INDEX_BITS = 48
_MASK64 = (1 << 64) - 1

_W2_EXACT_CAP = 4096


def keyed_generator(seed: int, domain: int, index: int) -> np.random.Generator:
    """Philox generator for one logical stream.

    The 128-bit key packs the user seed in one word and ``domain``/``index``
    in the other, so distinct (seed, domain, index) triples give independent
    streams.
    """
    if not isinstance(seed, (int, np.integer)) or seed < 0:
        raise InvalidParamError(f"seed must be a nonnegative integer, got {seed!r}")
    if not 0 <= index < (1 << _INDEX_BITS):
        raise InvalidParamError(f"stream index out of range: {index}")
    key = np.array(
        [int(seed) & _MASK64, ((domain << _INDEX_BITS) | index) & _MASK64],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))


def _polar_normals(gen: np.random.Generator, d: int) -> np.ndarray:
    """d standard normals via the polar (Marsaglia) transform."""
    out = np.empty(d)
    i = 0
    while i < d:
        u = 2.0 * gen.random() - 1.0
        v = 2.0 * gen.random() - 1.0
        s = u * u + v * v
        if s >= 1.0 or s == 0.0:
            continue
        f = math.sqrt(-2.0 * math.log(s) / s)
        out[i] = u * f
        i += 1
        if i < d:
            out[i] = v * f
            i += 1
    return out


def _check_count(n: int) -> int:
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidParamError(f"sample count must be a positive integer, got {n!r}")
    return int(n)


@dataclass(frozen=True)
class ParticleCloud:
    """A set of particles with the seed and label they were drawn under."""

    points: np.ndarray
    seed: Union[int, None] = None
    label: str = ""

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise SizeMismatchError(f"points must be (n, d), got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise NonFiniteError("cloud contains non-finite coordinates")
        pts = pts.copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def write_csv(self, path_or_buf, timestamp: Union[str, None] = None) -> None:
        """Write the cloud with header ``x1,...,xd``.

        When ``timestamp`` is given it is emitted as a leading comment line;
        omit it for byte-identical reruns.
        """
        if hasattr(path_or_buf, "write"):
            self._write_csv(path_or_buf, timestamp)
        else:
            with open(path_or_buf, "w", newline="") as fh:
                self._write_csv(fh, timestamp)

    def _write_csv(self, buf: IO[str], timestamp: Union[str, None]) -> None:
        writer = csv.writer(buf, lineterminator="\n")
        if timestamp is not None:
            buf.write(f"# generated: {timestamp}\n")
        writer.writerow([f"x{j + 1}" for j in range(self.dim)])
        for row in self.points:
            writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def read_csv(cls, path_or_buf, label: str = "") -> "ParticleCloud":
        if hasattr(path_or_buf, "read"):
            lines = path_or_buf.read().splitlines()
        else:
            with open(path_or_buf) as fh:
                lines = fh.read().splitlines()
        rows = [ln for ln in lines if ln.strip() and not ln.startswith("#")]
        if len(rows) < 2:
            raise DegenerateInputError("cloud file has no data rows")
        data = [[float(v) for v in ln.split(",")] for ln in rows[1:]]
        return cls(points=np.array(data), label=label)


def sample_gaussian(
    dim: int, n: int, seed: int, scale: float = 1.0, label: str = "gaussian"
) -> ParticleCloud:
    """n draws from scale * N(0, I_dim), one Philox stream per particle."""
    n = _check_count(n)
    if dim < 1:
        raise InvalidParamError(f"dim must be positive, got {dim}")
    pts = np.empty((n, dim))
    for i in range(n):
        gen = keyed_generator(seed, _SOURCE_DOMAIN, i)
        pts[i] = scale * _polar_normals(gen, dim)
    return ParticleCloud(points=pts, seed=seed, label=label)


def sample_target(target: Target, n: int, seed: int, label: str = "target") -> ParticleCloud:
    """n draws from the mixture; particle i selects its component from the
    first uniform of stream (seed, i), then draws its noise."""
    n = _check_count(n)
    cumw = np.cumsum(target.weights)
    pts = np.empty((n, target.dim))
    for i in range(n):
        gen = keyed_generator(seed, _TARGET_DOMAIN, i)
        comp = min(int(np.searchsorted(cumw, gen.random(), side="right")),
                   target.n_components - 1)
        z = _polar_normals(gen, target.dim)
        pts[i] = target.means[comp] + target.sigma * z
    return ParticleCloud(points=pts, seed=seed, label=label)


def sample_interpolant(
    target: Target, sched: Schedule, t: float, n: int, seed: int, label: str = ""
) -> ParticleCloud:
    """Draw a_t * Z + b_t * X1 with Z and X1 from separate stream domains.

    The same seed couples Z and X1 across calls: the particle i here is the
    exact combination of particle i of ``sample_gaussian`` and particle i of
    ``sample_target`` under that seed.
    """
    p = sched.eval(float(t))
    z = sample_gaussian(target.dim, n, seed)
    x1 = sample_target(target, n, seed)
    pts = p.a * z.points + p.b * x1.points
    return ParticleCloud(points=pts, seed=seed, label=label or f"interpolant@{t:g}")


def sample_source(target: Target, sched: Schedule, n: int, seed: int) -> ParticleCloud:
    """The time-0 marginal a_0 * Z + b_0 * X1 of the interpolation."""
    return sample_interpolant(target, sched, 0.0, n, seed, label="source")


def _cloud_points(obj) -> np.ndarray:
    pts = obj.points if isinstance(obj, ParticleCloud) else np.asarray(obj, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise SizeMismatchError(f"expected an (n, d) cloud, got shape {np.shape(obj)}")
    if not np.all(np.isfinite(pts)):
        raise NonFiniteError("cloud contains non-finite coordinates")
    return pts


def _w2_exact(pa: np.ndarray, pb: np.ndarray) -> float:
    if pa.shape[0] != pb.shape[0]:
        raise SizeMismatchError(
            f"exact w2 needs equal cloud sizes, got {pa.shape[0]} and {pb.shape[0]}"
        )
    if pa.shape[0] > _W2_EXACT_CAP:
        raise TooLargeError(
            f"exact w2 capped at {_W2_EXACT_CAP} particles, got {pa.shape[0]}; "
            "use method='sliced'"
        )
    cost = cdist(pa, pb, "sqeuclidean")
    rows, cols = linear_sum_assignment(cost)
    return float(math.sqrt(cost[rows, cols].mean()))


def _w2_1d_sq(u: np.ndarray, v: np.ndarray) -> float:
    """Squared 1D W2 between sorted samples, sizes may differ.

    Unequal sizes integrate the squared quantile gap over the merged
    quantile grid; this is exact for empirical measures.
    """
    nu, nv = u.size, v.size
    if nu == nv:
        d = u - v
        return float(np.mean(d * d))
    edges = np.union1d(np.arange(1, nu) / nu, np.arange(1, nv) / nv)
    qs = np.concatenate(([0.0], edges, [1.0]))
    widths = np.diff(qs)
    mids = 0.5 * (qs[:-1] + qs[1:])
    iu = np.minimum((mids * nu).astype(int), nu - 1)
    iv = np.minimum((mids * nv).astype(int), nv - 1)
    d = u[iu] - v[iv]
    return float(np.sum(widths * d * d))


def _w2_sliced(pa: np.ndarray, pb: np.ndarray, n_projections: int, seed: int) -> float:
    if not isinstance(n_projections, (int, np.integer)) or n_projections < 1:
        raise InvalidParamError(f"n_projections must be >= 1, got {n_projections!r}")
    dim = pa.shape[1]
    total = 0.0
    for j in range(n_projections):
        gen = keyed_generator(seed, _PROJ_DOMAIN, j)
        u = _polar_normals(gen, dim)
        u /= max(float(np.linalg.norm(u)), 1e-300)
        total += _w2_1d_sq(np.sort(pa @ u), np.sort(pb @ u))
    return float(math.sqrt(total / n_projections))


def w2(
    a: Union[ParticleCloud, np.ndarray],
    b: Union[ParticleCloud, np.ndarray],
    method: str = "exact",
    n_projections: int = 64,
    seed: int = 0,
) -> float:
    """Wasserstein-2 distance between two empirical clouds.

    ``method="exact"`` solves the assignment problem (equal sizes, capped at
    4096 particles). ``method="sliced"`` averages squared 1D distances over
    random directions and never exceeds the exact value.
    """
    pa, pb = _cloud_points(a), _cloud_points(b)
    if pa.shape[1] != pb.shape[1]:
        raise SizeMismatchError(
            f"clouds have different dimensions: {pa.shape[1]} vs {pb.shape[1]}"
        )
    if method == "exact":
        return _w2_exact(pa, pb)
    if method == "sliced":
        return _w2_sliced(pa, pb, n_projections, seed)
    raise InvalidParamError(f"unknown w2 method {method!r}; use 'exact' or 'sliced'")


@dataclass(frozen=True)
class FitReport:
    """Least-squares line fit summary."""

    slope: float
    intercept: float
    r_squared: float
    n: int

    def predict(self, xs) -> np.ndarray:
        return self.slope * np.asarray(xs, dtype=float) + self.intercept


def linear_fit(xs, ys) -> FitReport:
    """Ordinary least squares y = slope * x + intercept.

    Constant ys fit the flat line exactly, reported as slope 0 with
    r_squared 0 (no variance to explain). Constant xs are rejected.
    """
    xa = np.asarray(xs, dtype=float).ravel()
    ya = np.asarray(ys, dtype=float).ravel()
    if xa.shape != ya.shape:
        raise SizeMismatchError(f"xs and ys differ in length: {xa.size} vs {ya.size}")
    if xa.size < 2:
        raise DegenerateInputError("need at least two points to fit a line")
    if not (np.all(np.isfinite(xa)) and np.all(np.isfinite(ya))):
        raise NonFiniteError("fit inputs contain non-finite values")
    if np.ptp(xa) <= 1e-13 * max(1.0, float(np.max(np.abs(xa)))):
        raise DegenerateInputError("xs are (numerically) constant; slope undefined")
    ym = float(ya.mean())
    if np.ptp(ya) <= 1e-12 * max(1.0, float(np.max(np.abs(ya)))):
        return FitReport(slope=0.0, intercept=ym, r_squared=0.0, n=xa.size)
    xm = float(xa.mean())
    dx = xa - xm
    dy = ya - ym
    slope = float(dx @ dy) / float(dx @ dx)
    intercept = ym - slope * xm
    resid = ya - (slope * xa + intercept)
    r2 = 1.0 - float(resid @ resid) / float(dy @ dy)
    return FitReport(slope=slope, intercept=intercept,
                     r_squared=min(1.0, max(0.0, r2)), n=xa.size)
