"""Angular boundary sources and the source terms they induce.

An ``AngularSource`` is the frequency-integrated incoming intensity
g(n) >= 0, the same at every boundary point. Two source terms are built
from it: the half-space term felt by a boundary layer with inward normal
-N, and the attenuated term at an interior point of a domain.
"""

import csv

import numpy as np

from ._validation import as_points, as_unit_vectors, check_positive
from .absorption import AbsorptionField
from .geometry import orthonormal_frame
from .specfun import exp_integral_e2

# graded panels in mu = |n . N| resolving the layer e^{-x/mu} near mu = 0
_MU_EDGES = (0.0, 1e-4, 1e-3, 1e-2, 1e-1, 1.0)


def _gauss_on_panels(edges, order):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.asarray(edges, dtype=float)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (b - a) * x + 0.5 * (b + a)
    weights = 0.5 * (b - a) * w
    return nodes.ravel(), weights.ravel()


class AngularSource:
    """Base class; subclasses define values and hemisphere integrals."""

    kind = "abstract"

    def __call__(self, n):
        raise NotImplementedError

    @property
    def norm1(self):
        """Integral of g over the unit sphere."""
        raise NotImplementedError

    @property
    def norm_inf(self):
        raise NotImplementedError

    def azimuthal_measure(self, mu, normal):
        """Integral over the azimuth of g(n), n . normal = -mu."""
        raise NotImplementedError

    def mu_breakpoints(self, normal):
        """Values of mu in (0, 1) where the azimuthal measure is not smooth."""
        return []

    def sphere_rule(self, order=32):
        """Nodes and weights with sum_k w_k f(n_k) ~ integral of g f over S^2."""
        raise NotImplementedError

    def is_isotropic(self):
        return False


def _product_sphere_rule(axis, mu_lo, mu_hi, mu_order, phi_order):
    # Gauss-Legendre in mu = n . axis, uniform in azimuth around axis
    mu, wmu = _gauss_on_panels([mu_lo, mu_hi], mu_order)
    phi = 2.0 * np.pi * (np.arange(phi_order) + 0.5) / phi_order
    t1, t2 = orthonormal_frame(axis)
    s = np.sqrt(np.maximum(1.0 - mu * mu, 0.0))
    w = np.asarray(axis, dtype=float) / np.linalg.norm(axis)
    n = (mu[:, None, None] * w
         + s[:, None, None] * (np.cos(phi)[None, :, None] * t1 + np.sin(phi)[None, :, None] * t2))
    weights = np.repeat(wmu[:, None] * (2.0 * np.pi / phi_order), phi_order, axis=1)
    return n.reshape(-1, 3), weights.ravel()


class IsotropicSource(AngularSource):
    """g = level on the whole sphere."""

    kind = "isotropic"

    def __init__(self, level=1.0):
        self.level = float(level)
        if not np.isfinite(self.level) or self.level < 0:
            raise ValueError("source level must be nonnegative")

    def __repr__(self):
        return f"IsotropicSource({self.level})"

    def __call__(self, n):
        n = as_points(n)
        return np.full(n.shape[:-1], self.level)

    @property
    def norm1(self):
        return 4.0 * np.pi * self.level

    @property
    def norm_inf(self):
        return self.level

    def azimuthal_measure(self, mu, normal):
        return np.full(np.shape(mu), 2.0 * np.pi * self.level)

    def sphere_rule(self, order=32):
        n, w = _product_sphere_rule((0.0, 0.0, 1.0), -1.0, 1.0, order, 2 * order)
        return n, w * self.level

    def is_isotropic(self):
        return True


class ConeSource(AngularSource):
    """g = level for directions within half_angle of axis, zero elsewhere."""

    kind = "cone"

    def __init__(self, axis, half_angle, level=1.0):
        self.axis = as_unit_vectors(np.asarray(axis, dtype=float) / np.linalg.norm(axis))
        self.half_angle = float(half_angle)
        if not 0 < self.half_angle <= np.pi:
            raise ValueError("cone half-angle must lie in (0, pi]")
        self.level = float(level)
        if not np.isfinite(self.level) or self.level < 0:
            raise ValueError("source level must be nonnegative")

    def __repr__(self):
        return f"ConeSource({list(self.axis)}, {self.half_angle}, {self.level})"

    def __call__(self, n):
        n = as_points(n)
        return np.where(n @ self.axis >= np.cos(self.half_angle), self.level, 0.0)

    @property
    def norm1(self):
        return 2.0 * np.pi * self.level * (1.0 - np.cos(self.half_angle))

    @property
    def norm_inf(self):
        return self.level

    def azimuthal_measure(self, mu, normal):
        # n = -mu N + s (cos phi t1 + sin phi t2); inside the cone when
        # s rho cos(phi - phi0) >= cos(theta0) + mu (N . axis)
        mu = np.asarray(mu, dtype=float)
        nd = float(np.dot(normal, self.axis))
        rho = np.sqrt(max(1.0 - nd * nd, 0.0))
        s = np.sqrt(np.maximum(1.0 - mu * mu, 0.0))
        rhs = np.cos(self.half_angle) + mu * nd
        sr = s * rho
        with np.errstate(divide="ignore", invalid="ignore"):
            kappa = np.where(sr > 0, rhs / sr, np.where(rhs <= 0, -np.inf, np.inf))
        arc = np.where(kappa <= -1, 2 * np.pi,
                       np.where(kappa >= 1, 0.0, 2.0 * np.arccos(np.clip(kappa, -1, 1))))
        return self.level * arc

    def mu_breakpoints(self, normal):
        beta = np.arccos(np.clip(-np.dot(normal, self.axis), -1.0, 1.0))
        out = []
        for ang in (beta - self.half_angle, beta + self.half_angle):
            m = np.cos(ang)
            if 0.0 < m < 1.0:
                out.append(float(m))
        return sorted(out)

    def sphere_rule(self, order=32):
        n, w = _product_sphere_rule(self.axis, np.cos(self.half_angle), 1.0, order, 2 * order)
        return n, w * self.level


class TabulatedSource(AngularSource):
    """Bilinear interpolation of samples on a latitude-longitude grid.

    theta is the polar angle from +z in [0, pi], phi the azimuth in
    [0, 2 pi); interpolation wraps in phi and values are clamped at 0.
    """

    kind = "tabulated"

    def __init__(self, theta, phi, values, quad_order=96):
        self.theta = np.asarray(theta, dtype=float)
        self.phi = np.asarray(phi, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.values.shape != (self.theta.size, self.phi.size):
            raise ValueError("values must have shape (len(theta), len(phi))")
        if np.any(np.diff(self.theta) <= 0) or np.any(np.diff(self.phi) <= 0):
            raise ValueError("theta and phi grids must be increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("tabulated values must be finite")
        self.quad_order = int(quad_order)
        from scipy.interpolate import RegularGridInterpolator

        phi_ext = np.concatenate([self.phi[-1:] - 2 * np.pi, self.phi, self.phi[:1] + 2 * np.pi])
        vals_ext = np.concatenate([self.values[:, -1:], self.values, self.values[:, :1]], axis=1)
        self._interp = RegularGridInterpolator((self.theta, phi_ext), vals_ext,
                                               bounds_error=False, fill_value=None)
        n, w = _product_sphere_rule((0.0, 0.0, 1.0), -1.0, 1.0, self.quad_order,
                                    2 * self.quad_order)
        gv = self(n)
        self._norm1 = float(np.sum(w * gv))
        self._norm_inf = float(max(np.max(np.clip(self.values, 0, None)), np.max(gv)))

    @classmethod
    def from_csv(cls, path, **kwargs):
        """Read columns theta, phi, value (radians) into a grid."""
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows or not {"theta", "phi", "value"} <= set(rows[0]):
            raise ValueError("tabulated source CSV needs columns theta, phi, value")
        t = np.array([float(r["theta"]) for r in rows])
        p = np.array([float(r["phi"]) for r in rows])
        v = np.array([float(r["value"]) for r in rows])
        theta, phi = np.unique(t), np.unique(p)
        if theta.size * phi.size != v.size:
            raise ValueError("tabulated source CSV is not a full theta x phi grid")
        grid = np.full((theta.size, phi.size), np.nan)
        grid[np.searchsorted(theta, t), np.searchsorted(phi, p)] = v
        if np.any(np.isnan(grid)):
            raise ValueError("tabulated source CSV has duplicate or missing nodes")
        return cls(theta, phi, grid, **kwargs)

    def __repr__(self):
        return f"TabulatedSource({self.theta.size}x{self.phi.size})"

    def __call__(self, n):
        n = as_points(n)
        flat = n.reshape(-1, 3)
        th = np.arccos(np.clip(flat[:, 2], -1.0, 1.0))
        ph = np.mod(np.arctan2(flat[:, 1], flat[:, 0]), 2 * np.pi)
        th = np.clip(th, self.theta[0], self.theta[-1])
        vals = self._interp(np.column_stack([th, ph]))
        return np.clip(vals, 0.0, None).reshape(n.shape[:-1])

    @property
    def norm1(self):
        return self._norm1

    @property
    def norm_inf(self):
        return self._norm_inf

    def azimuthal_measure(self, mu, normal):
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        normal = np.asarray(normal, dtype=float)
        t1, t2 = orthonormal_frame(normal)
        m = 2 * self.quad_order
        phi = 2.0 * np.pi * (np.arange(m) + 0.5) / m
        s = np.sqrt(np.maximum(1.0 - mu * mu, 0.0))
        n = (-mu[:, None, None] * normal
             + s[:, None, None] * (np.cos(phi)[None, :, None] * t1
                                   + np.sin(phi)[None, :, None] * t2))
        return np.sum(self(n), axis=1) * (2.0 * np.pi / m)

    def sphere_rule(self, order=32):
        n, w = _product_sphere_rule((0.0, 0.0, 1.0), -1.0, 1.0, order, 2 * order)
        return n, w * self(n)


def make_source(spec):
    """Build a source from a mapping with a 'kind' entry (config files)."""
    kind = spec.get("kind")
    if kind == "isotropic":
        return IsotropicSource(spec.get("level", 1.0))
    if kind == "cone":
        return ConeSource(spec["axis"], spec["half_angle"], spec.get("level", 1.0))
    if kind == "tabulated":
        return TabulatedSource.from_csv(spec["path"])
    raise ValueError(f"unknown source kind {kind!r}")


def source_norms(g):
    """(integral of g over the sphere, sup of g)."""
    return g.norm1, g.norm_inf


def _cosine_mapped_panels(edges, order):
    # mu = a + (b - a)(1 - cos(pi t))/2 on each panel; smooths sqrt-type
    # endpoint behaviour such as the edge of a cone
    t, wt = np.polynomial.legendre.leggauss(order)
    t = 0.5 * (t + 1.0)
    wt = 0.5 * wt
    edges = np.asarray(edges, dtype=float)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = a + (b - a) * 0.5 * (1.0 - np.cos(np.pi * t))
    weights = (b - a) * 0.5 * np.pi * np.sin(np.pi * t) * wt
    return nodes.ravel(), weights.ravel()


def hemisphere_mu_rule(g, normal, mu_order=16):
    """Nodes mu in (0, 1] and weights with the azimuthal measure folded in."""
    edges = sorted(set(_MU_EDGES) | set(g.mu_breakpoints(normal)))
    if g.is_isotropic():
        mu, w = _gauss_on_panels(edges, mu_order)
    else:
        mu, w = _cosine_mapped_panels(edges, mu_order)
    return mu, w * g.azimuthal_measure(mu, normal)


def planar_source(g, normal, x, mu_order=16, method="auto"):
    """Half-space source G(x) = integral over n . N < 0 of g(n) e^{-x/|n . N|}.

    ``normal`` is the outward normal N of the half-space boundary and x >= 0
    the depth. Isotropic sources use the closed form 2 pi c E2(x) unless
    ``method="quadrature"``. Otherwise the hemisphere is integrated in
    mu = |n . N| with Gauss-Legendre (mu_order nodes per panel, panels
    graded toward mu = 0 and split where g has an edge) and an exact or
    uniform azimuthal integral.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise ValueError("planar_source needs finite depths x >= 0")
    normal = as_unit_vectors(np.asarray(normal, dtype=float) / np.linalg.norm(normal))
    if method == "auto" and g.is_isotropic():
        return 2.0 * np.pi * g.level * exp_integral_e2(x)
    mu, w = hemisphere_mu_rule(g, normal, mu_order)
    flat = np.atleast_1d(x).ravel()
    with np.errstate(under="ignore"):
        out = np.exp(-flat[:, None] / mu[None, :]) @ w
    return out.reshape(x.shape) if x.ndim else float(out[0])


def planar_source_moment(g, normal, mu_order=16):
    """Integral of x G(x) over x > 0, i.e. the hemisphere integral of g mu^2."""
    mu, w = hemisphere_mu_rule(g, normal, mu_order)
    return float(np.sum(w * mu * mu))


def domain_source(g, domain, alpha, eps, x, order=32, max_panel=None):
    """S(x) = integral of g(n) exp(-tau(x, n)) over the sphere.

    tau is the optical depth (1/eps) * integral of alpha along the segment
    from x back to the boundary point x - s(x, n) n.
    """
    eps = check_positive(eps, "eps")
    if alpha is None:
        alpha = AbsorptionField.constant(1.0)
    pts = as_points(x)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if np.any(domain.level(pts) > 1e-12):
        raise ValueError("domain_source needs points inside the domain")
    n, w = g.sphere_rule(order)
    c0 = None if alpha.is_constant else alpha.bounds(domain)[0]
    out = np.empty(pts.shape[0])
    for i, p in enumerate(pts):
        s = domain.ray_exit(p[None, :], n)
        tau = alpha.optical_depth(p[None, :], n, s, eps, max_panel=max_panel, c0=c0)
        with np.errstate(under="ignore"):
            out[i] = np.sum(w * np.exp(-tau))
    return float(out[0]) if single else out
