"""Exponential integrals and the one-dimensional transport kernel.

K(x) = E1(|x|) / 2 is the kernel obtained by integrating the grey
three-dimensional transport kernel over planes. Every closed-form
identity here has a quadrature twin selected with ``method="quadrature"``
so tests can compare the two routes.
"""

import numpy as np

EULER_GAMMA = 0.57721566490153286061

_SERIES_TERMS = 40
_CF_MAX_ITER = 400
_CF_TOL = 2e-16


def _e1_series(x):
    # E1(x) = -gamma - ln x - sum_{k>=1} (-x)^k / (k k!)
    total = np.zeros_like(x)
    term = np.ones_like(x)
    for k in range(1, _SERIES_TERMS + 1):
        term = term * (-x) / k
        total = total + term / k
    return -EULER_GAMMA - np.log(x) - total


def _e1_continued_fraction(x):
    # modified Lentz on e^{-x} / (x + 1 - 1^2/(x + 3 - 2^2/(x + 5 - ...)));
    # converged entries drop out of the working set
    tiny = 1e-300
    b = x + 1.0
    c = np.full_like(x, 1.0 / tiny)
    d = 1.0 / b
    h = d.copy()
    out = np.empty_like(x)
    idx = np.arange(x.size)
    for i in range(1, _CF_MAX_ITER):
        an = -float(i * i)
        b = b + 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h = h * delta
        done = np.abs(delta - 1.0) < _CF_TOL
        if np.any(done):
            out[idx[done]] = h[done]
            keep = ~done
            idx, b, c, d, h = idx[keep], b[keep], c[keep], d[keep], h[keep]
            if idx.size == 0:
                break
    out[idx] = h
    return out * np.exp(-x)


def exp_integral_e1(x):
    """E1(x) for x > 0, relative accuracy near 1e-13.

    Power series on (0, 1], continued fraction beyond. Raises
    ValueError for x <= 0 where E1 is not finite or not real.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr) & ~np.isposinf(arr)):
        raise ValueError("exp_integral_e1: non-finite argument")
    if np.any(arr <= 0):
        raise ValueError("exp_integral_e1 requires x > 0")
    flat = np.atleast_1d(arr).ravel()
    out = np.empty_like(flat)
    small = flat <= 1.0
    if np.any(small):
        out[small] = _e1_series(flat[small])
    big = ~small
    if np.any(big):
        xb = flat[big]
        res = np.zeros_like(xb)
        live = xb < 740.0  # beyond this e^{-x} underflows
        if np.any(live):
            res[live] = _e1_continued_fraction(xb[live])
        out[big] = res
    out = out.reshape(np.shape(arr))
    return out if out.ndim else float(out)


def exp_integral_e2(x):
    """E2(x) = e^{-x} - x E1(x) for x >= 0, with E2(0) = 1."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise ValueError("exp_integral_e2 requires x >= 0")
    flat = np.atleast_1d(arr).ravel()
    out = np.ones_like(flat)
    pos = flat > 0
    if np.any(pos):
        xp = flat[pos]
        out[pos] = np.exp(-xp) - xp * exp_integral_e1(xp)
    out = out.reshape(np.shape(arr))
    return out if out.ndim else float(out)


def kernel_K(x):
    """K(x) = E1(|x|)/2; even, positive, integrable, infinite at 0."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr == 0):
        raise ValueError("kernel_K is singular at x = 0")
    return 0.5 * exp_integral_e1(np.abs(arr))


def _xk(x):
    # x K(x) for x >= 0, continuous extension 0 at the origin
    flat = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros_like(flat)
    pos = flat > 0
    if np.any(pos):
        out[pos] = flat[pos] * kernel_K(flat[pos])
    return out


def _maybe_scalar(x, out):
    return out.reshape(np.shape(x)) if np.ndim(x) else float(out[0])


def _quad(f, a, b):
    from scipy.integrate import quad

    val, _ = quad(f, a, b, limit=400, epsabs=1e-15, epsrel=1e-13)
    return val


def _k_scalar(s):
    # quadrature integrand; the log singularity at 0 has measure zero
    return 0.5 * exp_integral_e1(abs(s)) if s != 0 else 0.0


TAIL_AT_ZERO = 0.5  # half of the total mass of K


def _tail(x):
    # int_x^inf K for x >= 0, value 1/2 at the origin
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    return 0.5 * np.exp(-xa) - _xk(xa)


def tail_from(x, method="closed"):
    """Integral of K over (x, inf) for x > 0: e^{-x}/2 - x K(x).

    x = 0 is rejected; its value is TAIL_AT_ZERO.
    """
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xa <= 0):
        raise ValueError("tail_from requires x > 0 (use TAIL_AT_ZERO at 0)")
    if method == "quadrature":
        out = np.array([_quad(_k_scalar, v, np.inf) for v in xa])
    else:
        out = _tail(xa)
    return _maybe_scalar(x, out)


def head_from(lower, method="closed"):
    """Integral of K over (lower, inf) for any real lower limit.

    With lower = -x < 0 this is 1 - e^{-x}/2 + x K(x), so
    head_from(-x) + tail_from(x) = 1.
    """
    za = np.atleast_1d(np.asarray(lower, dtype=float))
    if method == "quadrature":
        out = np.array([_quad(_k_scalar, z, np.inf) if z >= 0
                        else 0.5 + _quad(_k_scalar, z, 0.0) for z in za])
        return _maybe_scalar(lower, out)
    out = np.empty_like(za)
    neg = za < 0
    if np.any(neg):
        out[neg] = 1.0 - _tail(-za[neg])
    if np.any(~neg):
        out[~neg] = _tail(za[~neg])
    return _maybe_scalar(lower, out)


def first_moment_tail(x, method="closed"):
    """Integral of s K(s) over (x, inf) for x >= 0; equals 1/4 at 0."""
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xa < 0):
        raise ValueError("first_moment_tail requires x >= 0")
    if method == "quadrature":
        out = np.array([_quad(lambda s: s * _k_scalar(s), v, np.inf) for v in xa])
    else:
        e = np.exp(-xa)
        out = 0.25 * xa * e + 0.25 * e - 0.5 * xa * _xk(xa)
    return _maybe_scalar(x, out)


def second_antiderivative_tail(x):
    """Integral of (s - x) K(s) over (x, inf) for x >= 0; 1/4 at 0.

    This is also the integral of tail_from over (x, inf).
    """
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xa < 0):
        raise ValueError("second_antiderivative_tail requires x >= 0")
    out = 0.25 * np.exp(-xa) * (1.0 - xa) + 0.5 * xa * _xk(xa)
    return _maybe_scalar(x, out)


def kernel_fourier(xi, method="closed"):
    """Unitary Fourier transform of K: arctan(xi) / (xi sqrt(2 pi)).

    The value at xi = 0 is the limit 1/sqrt(2 pi). method="quadrature"
    computes the cosine transform numerically instead.
    """
    xa = np.atleast_1d(np.asarray(xi, dtype=float))
    norm = 1.0 / np.sqrt(2.0 * np.pi)
    if method == "quadrature":
        return _maybe_scalar(xi, norm * _cosine_transform(xa.ravel()).reshape(xa.shape))
    out = np.full_like(xa, norm)
    nz = xa != 0
    out[nz] = norm * np.arctan(xa[nz]) / xa[nz]
    return _maybe_scalar(xi, out)


def _cosine_nodes(order=16, x_max=45.0, h=0.02):
    # geometric panels into the log singularity at 0, then panels short
    # enough to resolve cos(xi x) for |xi| <= 100
    near = np.concatenate([[0.0], 0.5 ** np.arange(60, 0, -1) * 0.5, [0.5]])
    far = np.linspace(0.5, x_max, int(np.ceil((x_max - 0.5) / h)) + 1)
    edges = np.concatenate([near[:-1], far])
    g, w = np.polynomial.legendre.leggauss(order)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (b - a) * g + 0.5 * (a + b)).ravel()
    weights = (0.5 * (b - a) * w).ravel()
    return nodes, weights * kernel_K(nodes)


def _cosine_transform(xi):
    """2 * integral_0^inf K(x) cos(xi x) dx by composite Gauss-Legendre."""
    if np.any(np.abs(xi) > 100):
        raise ValueError("quadrature route resolves |xi| <= 100 only")
    nodes, wk = _cosine_nodes()
    out = np.empty(xi.size)
    for lo in range(0, xi.size, 64):
        blk = xi[lo:lo + 64]
        out[lo:lo + 64] = 2.0 * (np.cos(blk[:, None] * nodes[None, :]) @ wk)
    return out


def kernel_envelope(x):
    """Lower and upper envelopes of K:

    e^{-|x|} ln(1 + 2/|x|) / 4  <=  K(x)  <=  e^{-|x|} ln(1 + 1/|x|) / 2
    """
    ax = np.abs(np.asarray(x, dtype=float))
    if np.any(ax == 0):
        raise ValueError("kernel_envelope is unbounded at 0")
    e = np.exp(-ax)
    return 0.25 * e * np.log1p(2.0 / ax), 0.5 * e * np.log1p(1.0 / ax)


def kernel_eps_const(alpha, eps, r):
    """Full-space kernel alpha e^{-alpha r/eps} / (4 pi eps r^2), r > 0."""
    r = np.asarray(r, dtype=float)
    if eps <= 0 or alpha <= 0:
        raise ValueError("alpha and eps must be positive")
    if np.any(r <= 0):
        raise ValueError("kernel_eps_const is singular at r = 0")
    return alpha * np.exp(-alpha * r / eps) / (4.0 * np.pi * eps * r * r)


def ball_mass(alpha, eps, r):
    """Mass of the constant-alpha kernel on the ball of radius r: 1 - e^{-alpha r/eps}."""
    if eps <= 0 or alpha <= 0:
        raise ValueError("alpha and eps must be positive")
    return -np.expm1(-alpha * np.asarray(r, dtype=float) / eps)
