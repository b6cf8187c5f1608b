"""Half-space boundary-layer problem u - K*u = G on [0, inf).

The operator is discretized by product integration: u is taken piecewise
linear on a graded grid and every kernel integral over a grid interval is
done in closed form, so the logarithmic singularity of K is integrated
exactly. Beyond Y_max the profile is continued by its last value.
"""

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from sklearn.base import BaseEstimator

from ._validation import check_is_fitted, check_positive
from .geometry import ConvexDomain
from .sources import planar_source, planar_source_moment
from .specfun import exp_integral_e1, second_antiderivative_tail, TAIL_AT_ZERO

NEGATIVE_TOL = 1e-10
MONOTONE_TOL = 1e-12
MAX_FIRST_SPACING = 1e-3
MAX_SPACING = 0.25


@dataclass(frozen=True)
class HalfLineGrid:
    """Nodes 0 = y_0 < ... < y_M = Y_max in optical depth."""

    nodes: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.nodes, dtype=float)
        if y.ndim != 1 or y.size < 3:
            raise ValueError("grid needs at least three nodes")
        if y[0] != 0.0 or np.any(np.diff(y) <= 0):
            raise ValueError("grid must start at 0 and increase strictly")
        h = np.diff(y)
        if h[0] > MAX_FIRST_SPACING * (1 + 1e-12) or h.max() > MAX_SPACING * (1 + 1e-12):
            raise ValueError("grid too coarse: need first spacing <= 1e-3 and "
                             "all spacings <= 0.25")
        object.__setattr__(self, "nodes", y)

    @classmethod
    def graded(cls, y_max=40.0, h0=1e-3, h_max=0.035, growth=1.1):
        """Geometric spacing from h0 up to h_max, then uniform to y_max."""
        check_positive(y_max, "y_max")
        if not 0 < h0 <= h_max or growth <= 1:
            raise ValueError("need 0 < h0 <= h_max and growth > 1")
        ys = [0.0]
        h = h0
        while h < h_max and ys[-1] + h < y_max:
            ys.append(ys[-1] + h)
            h *= growth
        n_uniform = max(int(np.ceil((y_max - ys[-1]) / h_max)), 1)
        tail = np.linspace(ys[-1], y_max, n_uniform + 1)[1:]
        return cls(np.concatenate([ys, tail]))

    @property
    def y_max(self):
        return float(self.nodes[-1])

    @property
    def spacing(self):
        return np.diff(self.nodes)

    @property
    def size(self):
        return self.nodes.size

    def refined(self):
        """Grid with every interval halved."""
        y = self.nodes
        mid = 0.5 * (y[:-1] + y[1:])
        out = np.empty(2 * y.size - 1)
        out[0::2] = y
        out[1::2] = mid
        return HalfLineGrid(out)


def _tail_and_moment(d):
    # int_d^inf K and int_d^inf s K(s) ds for d >= 0, elementwise
    d = np.asarray(d, dtype=float)
    xk = np.zeros_like(d)
    pos = d > 0
    xk[pos] = 0.5 * d[pos] * exp_integral_e1(d[pos])
    e = np.exp(-d)
    tail = 0.5 * e - xk
    moment = 0.25 * d * e + 0.25 * e - 0.5 * d * xk
    return tail, moment


def hat_weights(nodes, targets):
    """W[i, j] = integral over [y_0, y_M] of K(t_i - y) phi_j(y) dy.

    phi_j are the piecewise-linear hat functions on ``nodes``; t_i are
    arbitrary real evaluation points. Intervals are split at t_i when it
    falls inside, so every piece has the singular point at an endpoint.
    """
    y = np.asarray(nodes, dtype=float)
    t = np.atleast_1d(np.asarray(targets, dtype=float))
    h = np.diff(y)
    a = y[None, :-1] - t[:, None]  # signed offsets of interval ends
    b = y[None, 1:] - t[:, None]
    W = np.zeros((t.size, y.size))

    def piece(lo, hi):
        # integrals of K and of (s - lo) K over [lo, hi] in s = y - t, 0 <= lo <= hi
        tl, ml = _tail_and_moment(lo)
        th, mh = _tail_and_moment(hi)
        i0 = tl - th
        i1 = (ml - mh) - lo * i0
        return np.maximum(i0, 0.0), np.clip(i1, 0.0, None)

    # whole interval right of t: near end is a, s in [a, b]
    right = a >= 0
    left = b <= 0
    split = ~(right | left)
    rows, cols = np.nonzero(right)
    if rows.size:
        i0, i1 = piece(a[rows, cols], b[rows, cols])
        hh = h[cols]
        np.add.at(W, (rows, cols), i0 - np.minimum(i1 / hh, i0))
        np.add.at(W, (rows, cols + 1), np.minimum(i1 / hh, i0))
    rows, cols = np.nonzero(left)
    if rows.size:
        # mirror: distance from t runs from |b| (node j+1) to |a| (node j)
        i0, i1 = piece(-b[rows, cols], -a[rows, cols])
        hh = h[cols]
        np.add.at(W, (rows, cols + 1), i0 - np.minimum(i1 / hh, i0))
        np.add.at(W, (rows, cols), np.minimum(i1 / hh, i0))
    rows, cols = np.nonzero(split)
    if rows.size:
        hh = h[cols]
        lo_len, hi_len = -a[rows, cols], b[rows, cols]
        # value of the hat pair at t: linear split
        lam = lo_len / hh
        # right piece [t, y_{j+1}]: u = u_t + (u_{j+1} - u_t) s / hi_len
        i0, i1 = piece(np.zeros_like(hi_len), hi_len)
        r_far = np.minimum(i1 / hi_len, i0)
        r_near = i0 - r_far
        i0l, i1l = piece(np.zeros_like(lo_len), lo_len)
        l_far = np.minimum(i1l / lo_len, i0l)
        l_near = i0l - l_far
        near = r_near + l_near  # weight on u(t) = (1 - lam) u_j + lam u_{j+1}
        np.add.at(W, (rows, cols), l_far + near * (1.0 - lam))
        np.add.at(W, (rows, cols + 1), r_far + near * lam)
    return W


@dataclass
class MilneOperator:
    """Dense discretization A of u -> u - integral_0^inf K(. - y) u(y) dy.

    Row i reads u_i (1 - C_i) - sum_j w_ij (u_j - u_i) with
    C_i = integral_0^inf K(y_i - y) dy and w_ij >= 0 the product-integration
    weights (tail closure included in the last column).
    """

    grid: HalfLineGrid
    matrix: np.ndarray
    masses: np.ndarray
    weights: np.ndarray
    _lu: tuple = field(default=None, repr=False)

    def apply(self, u):
        return self.matrix @ np.asarray(u, dtype=float)

    def solve(self, rhs):
        if self._lu is None:
            self._lu = lu_factor(self.matrix)
        return lu_solve(self._lu, np.asarray(rhs, dtype=float))


def assemble_operator(grid):
    """Build the MilneOperator on ``grid`` (closed-form interval integrals)."""
    if not isinstance(grid, HalfLineGrid):
        grid = HalfLineGrid(np.asarray(grid, dtype=float))
    y = grid.nodes
    W = hat_weights(y, y)
    # constant continuation beyond Y_max carries the far tail onto the last node
    far, _ = _tail_and_moment(grid.y_max - y)
    W[:, -1] += far
    tail0, _ = _tail_and_moment(y)
    masses = 1.0 - tail0
    A = -W
    A[np.diag_indices_from(A)] += 1.0
    return MilneOperator(grid, A, masses, W)


@dataclass(frozen=True)
class HalfLineProfile:
    grid: HalfLineGrid
    values: np.ndarray
    residual: float
    u_inf: float = np.nan
    u_inf_moment: float = np.nan
    decay_rate: float = np.nan

    def __call__(self, y):
        """Piecewise-linear profile, constant beyond Y_max."""
        y = np.asarray(y, dtype=float)
        if np.any(y < 0):
            raise ValueError("profile is defined for y >= 0")
        return np.interp(y, self.grid.nodes, self.values)


def _sample_source(G, grid):
    y = grid.nodes
    vals = np.asarray(G(y) if callable(G) else G, dtype=float)
    if vals.shape != y.shape:
        raise ValueError("sampled source must match the grid size")
    if not np.all(np.isfinite(vals)):
        raise ValueError("source samples must be finite")
    return vals


def picard_iterates(op, G, steps):
    """Monotone iteration u <- K*u + G from u = 0 with the same quadrature.

    Returns the last iterate and the minimum increment over all steps;
    raises if an increment drops below -1e-12 (quadrature failure).
    """
    g = _sample_source(G, op.grid)
    u = np.zeros_like(g)
    worst = np.inf
    scale = max(np.max(np.abs(g)), 1e-300)
    for _ in range(int(steps)):
        nxt = op.weights @ u + g
        inc = np.min(nxt - u) / scale
        worst = min(worst, inc)
        if inc < -MONOTONE_TOL:
            raise ArithmeticError(f"Picard sequence not monotone (increment {inc:.3e})")
        u = nxt
    return u, worst


def solve_milne(op, G, picard_steps=0):
    """Dense solve of A u = G; G sampled on the grid or a callable.

    With picard_steps > 0 the monotone iteration is run alongside and its
    sup gap to the direct solution on [0, Y_max/2] is reported through the
    returned tuple (profile, gap). The gap closes only slowly because the
    half-line problem is conservative; it is not a convergence criterion.
    """
    g = _sample_source(G, op.grid)
    if np.any(g < 0):
        raise ValueError("solve_milne needs a nonnegative source")
    u = op.solve(g)
    scale = max(np.max(np.abs(u)), np.max(g), 1e-300)
    if np.min(u) < -NEGATIVE_TOL * scale:
        raise ArithmeticError(f"discretization failure: solution entry {np.min(u):.3e} < 0")
    residual = float(np.max(np.abs(op.apply(u) - g)))
    profile = HalfLineProfile(op.grid, u, residual)
    if picard_steps:
        it, _ = picard_iterates(op, g, picard_steps)
        half = op.grid.nodes <= 0.5 * op.grid.y_max
        gap = float(np.max(np.abs(it[half] - u[half])))
        return profile, gap
    return profile


def _gauss_on_intervals(y, order=4):
    x, w = np.polynomial.legendre.leggauss(order)
    a, b = y[:-1, None], y[1:, None]
    pts = 0.5 * (b - a) * x + 0.5 * (a + b)
    wts = 0.5 * (b - a) * w
    lam = (pts - a) / (b - a)
    return pts, wts, lam


def first_moment_of_layer(profile, G):
    """m1(W) for W = G on x > 0 and W = -K*u (from the half-line) on x < 0.

    The negative-axis part equals integral_0^inf u(y) Q(y) dy with
    Q(y) = integral_y^inf (s - y) K(s) ds after exchanging the order of
    integration, so no nested singular quadrature is needed.
    """
    y = profile.grid.nodes
    u = profile.values
    pts, wts, lam = _gauss_on_intervals(y)
    u_pts = (1.0 - lam) * u[:-1, None] + lam * u[1:, None]
    neg = float(np.sum(wts * u_pts * second_antiderivative_tail(pts)))
    # beyond Y_max u is constant; the remaining Q-mass is below e^{-Y_max}
    if callable(G):
        pos = float(np.sum(wts * pts * np.asarray(G(pts), dtype=float)))
    else:
        g = _sample_source(G, profile.grid)
        h = np.diff(y)
        pos = float(np.sum(h / 6.0 * (g[:-1] * (2 * y[:-1] + y[1:]) + g[1:] * (y[:-1] + 2 * y[1:]))))
    return pos + neg


def milne_limit(profile, G, window=(5.0, 20.0), plateau_fraction=0.8):
    """(plateau estimate, 3 m1(W) estimate, log-slope of |u - u_inf|)."""
    y = profile.grid.nodes
    u = profile.values
    sel = y >= plateau_fraction * profile.grid.y_max
    w = np.zeros_like(y)
    h = np.diff(y)
    idx = np.nonzero(sel)[0]
    # trapezoid average over the plateau window
    seg = h[idx[:-1]]
    w[idx[:-1]] += 0.5 * seg
    w[idx[1:]] += 0.5 * seg
    plateau = float(np.sum(w * u) / np.sum(w))
    moment = 3.0 * first_moment_of_layer(profile, G)
    in_win = (y >= window[0]) & (y <= window[1])
    dev = np.abs(u[in_win] - plateau)
    scale = max(abs(plateau), np.max(np.abs(u)), 1e-300)
    ok = dev > 1e-13 * scale
    if np.count_nonzero(ok) >= 3:
        rate = float(np.polyfit(y[in_win][ok], np.log(dev[ok]), 1)[0])
    else:
        rate = float("nan")
    gap = abs(plateau - moment) / max(abs(plateau), abs(moment), 1e-300)
    if gap > 1e-2:
        warnings.warn(f"limit estimators disagree by {gap:.2%}; refine the grid",
                      RuntimeWarning, stacklevel=2)
    return plateau, moment, rate


def temperature_from_u(u, sigma=1.0):
    """T = (u / (4 pi sigma))^(1/4)."""
    u = np.asarray(u, dtype=float)
    sigma = check_positive(sigma, "sigma")
    if np.any(u < 0):
        raise ValueError("u must be nonnegative")
    out = (u / (4.0 * np.pi * sigma)) ** 0.25
    return float(out) if out.ndim == 0 else out


class MilneSolver(BaseEstimator):
    """Estimator wrapper: fit solves the layer problem for a source G.

    Parameters
    ----------
    y_max, h0, h_max, growth : grid parameters, see HalfLineGrid.graded.
    picard_steps : optional monotone-iteration cross-check length.
    """

    def __init__(self, y_max=40.0, h0=1e-3, h_max=0.035, growth=1.1, picard_steps=0):
        self.y_max = y_max
        self.h0 = h0
        self.h_max = h_max
        self.growth = growth
        self.picard_steps = picard_steps

    def _operator(self):
        key = (self.y_max, self.h0, self.h_max, self.growth)
        if getattr(self, "_op_key", None) != key:
            self._op = assemble_operator(HalfLineGrid.graded(*key))
            self._op_key = key
        return self._op

    def fit(self, G, y=None):
        op = self._operator()
        out = solve_milne(op, G, picard_steps=self.picard_steps)
        if self.picard_steps:
            prof, self.picard_gap_ = out
        else:
            prof = out
        u_inf, u_mom, rate = milne_limit(prof, G)
        self.grid_ = op.grid
        self.profile_ = HalfLineProfile(op.grid, prof.values, prof.residual, u_inf, u_mom, rate)
        self.u_inf_ = u_inf
        self.u_inf_moment_ = u_mom
        self.decay_rate_ = rate
        self.residual_ = prof.residual
        return self

    def predict(self, y):
        check_is_fitted(self, "profile_")
        return self.profile_(y)


class BoundaryTemperatureMap(BaseEstimator):
    """p -> u_inf(p) over boundary samples, one layer solve per sample.

    The layer problem at p is driven by planar_source(g, N_p, .). All
    samples share one factorized operator. ``predict`` interpolates the
    table to other boundary points by inverse-distance weighting.
    """

    def __init__(self, samples=64, y_max=40.0, h0=1e-3, h_max=0.035, growth=1.1,
                 neighbours=4, mu_order=16):
        self.samples = samples
        self.y_max = y_max
        self.h0 = h0
        self.h_max = h_max
        self.growth = growth
        self.neighbours = neighbours
        self.mu_order = mu_order

    def fit(self, domain, source, alpha=None):
        # the layer problem is alpha-independent once depth is measured optically
        if int(self.samples) < 1:
            raise ValueError("samples must be >= 1")
        solver = MilneSolver(self.y_max, self.h0, self.h_max, self.growth)
        op = solver._operator()
        if isinstance(domain, ConvexDomain):
            pts, normals = domain.sample_boundary(int(self.samples))
        else:
            pts, normals = domain
            pts, normals = np.atleast_2d(pts), np.atleast_2d(normals)
        y = op.grid.nodes
        u_inf = np.empty(len(pts))
        u_mom = np.empty(len(pts))
        profiles = []
        cache = {}
        for k, (p, nrm) in enumerate(zip(pts, normals)):
            key = "iso" if source.is_isotropic() else tuple(np.round(nrm, 15))
            if key not in cache:
                try:
                    g = planar_source(source, nrm, y, mu_order=self.mu_order)
                    prof = solve_milne(op, g)
                    a, b, _ = milne_limit(prof, lambda x, n=nrm: planar_source(
                        source, n, x, mu_order=self.mu_order))
                except (ArithmeticError, ValueError) as exc:
                    raise type(exc)(f"boundary point {k} at {p.tolist()}: {exc}") from exc
                cache[key] = (a, b, replace(prof, u_inf=a, u_inf_moment=b))
            u_inf[k], u_mom[k], prof_k = cache[key]
            profiles.append(prof_k)
        self.points_ = np.asarray(pts, dtype=float)
        self.normals_ = np.asarray(normals, dtype=float)
        self.u_inf_ = u_inf
        self.u_inf_moment_ = u_mom
        self.profiles_ = profiles
        return self

    def predict(self, points):
        """Inverse-distance weighting from the nearest boundary samples."""
        check_is_fitted(self, "u_inf_")
        q = np.atleast_2d(np.asarray(points, dtype=float))
        d = np.linalg.norm(q[:, None, :] - self.points_[None, :, :], axis=2)
        k = min(int(self.neighbours), self.points_.shape[0])
        idx = np.argsort(d, axis=1, kind="stable")[:, :k]
        dk = np.take_along_axis(d, idx, axis=1)
        vals = self.u_inf_[idx]
        exact = dk[:, 0] <= 1e-14
        with np.errstate(divide="ignore"):
            w = 1.0 / dk**2
        w[exact] = 0.0
        w[exact, 0] = 1.0
        return np.sum(w * vals, axis=1) / np.sum(w, axis=1)

    def lipschitz_quotients(self):
        check_is_fitted(self, "u_inf_")
        p = self.points_
        d = np.linalg.norm(p[:, None] - p[None], axis=2)
        du = np.abs(self.u_inf_[:, None] - self.u_inf_[None])
        iu = np.triu_indices(len(p), 1)
        return du[iu] / d[iu]


def boundary_temperature_map(domain, g, alpha=None, samples=64, **kwargs):
    """Table (points, normals, u_inf, u_inf_moment) over boundary samples."""
    m = BoundaryTemperatureMap(samples=samples, **kwargs).fit(domain, g, alpha)
    return m.points_, m.normals_, m.u_inf_, m.u_inf_moment_


__all__ = ["HalfLineGrid", "HalfLineProfile", "MilneOperator", "MilneSolver",
           "BoundaryTemperatureMap", "assemble_operator", "solve_milne",
           "milne_limit", "picard_iterates", "boundary_temperature_map",
           "temperature_from_u", "hat_weights", "first_moment_of_layer", "TAIL_AT_ZERO"]
