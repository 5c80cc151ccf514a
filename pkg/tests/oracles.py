"""Independent numerical oracles used by the test suite.

Everything here is deliberately implemented by a different route than the
library code: finite differences instead of closed-form derivatives,
quadrature instead of log-sum-exp identities, brute force instead of the
Hungarian method, and the affine Gaussian transport law instead of RK4.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.integrate import trapezoid


def central_diff(f, t: float, h: float = 1e-5) -> float:
    """First derivative of a scalar function by central differences."""
    return (f(t + h) - f(t - h)) / (2.0 * h)


def second_diff(f, t: float, h: float = 1e-4) -> float:
    """Second derivative of a scalar function by central differences."""
    return (f(t + h) - 2.0 * f(t) + f(t - h)) / (h * h)


def grad_fd(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Gradient of scalar f at x, componentwise central differences."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def jacobian_fd(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Jacobian of vector-valued f at x, columns by central differences."""
    x = np.asarray(x, dtype=float)
    d = x.size
    cols = []
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2.0 * h))
    return np.stack(cols, axis=-1)


def mixture_logpdf_quad(x: float, weights, means, noise_std: float, comp_std: float,
                        n_nodes: int = 20001, half_width: float = 12.0) -> float:
    """Log density of a*Z + b*Y at a 1d point by direct quadrature over y.

    Here the target Y is a 1d Gaussian mixture (means, comp_std, weights),
    the convolving kernel has standard deviation noise_std = a and the data
    coordinate has already been scaled so that b*Y has means b*mu and std
    b*comp_std.  Trapezoid rule on a wide uniform grid.
    """
    lo = min(means) - half_width * max(comp_std, 1e-12) - half_width * noise_std
    hi = max(means) + half_width * max(comp_std, 1e-12) + half_width * noise_std
    ys = np.linspace(lo, hi, n_nodes)
    dens = np.zeros_like(ys)
    for w, m in zip(weights, means):
        if comp_std > 0:
            py = w * np.exp(-0.5 * ((ys - m) / comp_std) ** 2) / (comp_std * math.sqrt(2 * math.pi))
        else:
            raise ValueError("comp_std must be positive")
        dens += py
    kern = np.exp(-0.5 * ((x - ys) / noise_std) ** 2) / (noise_std * math.sqrt(2 * math.pi))
    val = trapezoid(dens * kern, ys)
    return math.log(val)


def gaussian_flow_state(mean, var, sched, s: float, t: float, x0):
    """Exact probability-flow transport for a single Gaussian target.

    For target N(mean, var*I) the flow map from time s to t is the affine map
    x -> b_t*mean + (c_t/c_s)(x - b_s*mean) with c_u^2 = a_u^2 + var*b_u^2.
    """
    mean = np.asarray(mean, dtype=float)
    ps, pt = sched.eval(s), sched.eval(t)
    cs = math.sqrt(ps.a ** 2 + var * ps.b ** 2)
    ct = math.sqrt(pt.a ** 2 + var * pt.b ** 2)
    return pt.b * mean + (ct / cs) * (np.asarray(x0, dtype=float) - ps.b * mean)


def gaussian_flow_logdet(mean, var, sched, s: float, t: float, d: int) -> float:
    """Log |det| of the exact Gaussian flow map Jacobian (c_t/c_s)^d."""
    ps, pt = sched.eval(s), sched.eval(t)
    cs = math.sqrt(ps.a ** 2 + var * ps.b ** 2)
    ct = math.sqrt(pt.a ** 2 + var * pt.b ** 2)
    return d * math.log(ct / cs)


def w2_bruteforce(xs: np.ndarray, ys: np.ndarray) -> float:
    """Exact W2 between equal-size empirical clouds by trying all matchings."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    n = xs.shape[0]
    if n != ys.shape[0]:
        raise ValueError("clouds must have equal size")
    best = math.inf
    for perm in itertools.permutations(range(n)):
        cost = float(np.sum((xs - ys[list(perm)]) ** 2))
        best = min(best, cost)
    return math.sqrt(best / n)


def simpson(f, lo: float, hi: float, n_panels: int = 2048) -> float:
    """Composite Simpson quadrature with n_panels panels."""
    xs = np.linspace(lo, hi, 2 * n_panels + 1)
    ys = np.array([f(x) for x in xs])
    h = (hi - lo) / (2 * n_panels)
    w = np.ones_like(ys)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return float(h / 3.0 * np.sum(w * ys))
