"""Non-local radiative equation for u^eps on a convex domain.

    u(x) = integral_Omega K_eps(x; eta) u(eta) d eta + S(x)

is written along characteristics: with tau the optical depth from x
backwards along -n,

    u(x) = (1/4 pi) int dn int_0^{tau_s} e^{-tau} u(x - t(tau) n) dtau
           + int g(n) e^{-tau_s(x, n)} dn.

The tau-integral is done exactly against a piecewise-linear interpolant
of u along each ray, so the discrete operator has nonnegative weights,
row masses below one and reproduces constants exactly. Three meshes are
supported: radial shells on a ball (isotropic sources), a coarse
cartesian grid (any convex domain and source) and a slab used for
validation, where the equation is one-dimensional in optical depth.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator

from ._validation import as_points, check_is_fitted, check_positive
from .absorption import TAU_CUT, AbsorptionField
from .geometry import ConvexDomain, Slab
from .milne import hat_weights, HalfLineGrid
from .sources import planar_source, _gauss_on_panels
from .specfun import kernel_K

_MU_PANELS = (0.0, 1e-5, 1e-4, 1e-3, 1e-2, 0.05, 0.2, 0.5, 1.0)
_GL3_X, _GL3_W = np.polynomial.legendre.leggauss(3)


def radial_kernel(r, rho, alpha, eps):
    """Sphere-averaged constant-alpha kernel on the shell |eta| = rho.

    (rho / (eps' r)) [K(|r - rho| / eps') - K((r + rho) / eps')],
    eps' = eps / alpha. Singular (logarithmically) at r = rho.
    """
    r = np.asarray(r, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if np.any(r <= 0) or np.any(rho <= 0):
        raise ValueError("radial_kernel needs r, rho > 0")
    if np.any(r == rho):
        raise ValueError("radial_kernel is singular at r = rho")
    ep = check_positive(eps, "eps") / check_positive(alpha, "alpha")
    return rho / (ep * r) * (kernel_K(np.abs(r - rho) / ep) - kernel_K((r + rho) / ep))


def symmetric_mu_rule(order=6):
    """Composite Gauss rule on [-1, 1], graded toward mu = 0 on both sides."""
    edges = np.asarray(_MU_PANELS)
    mu, w = _gauss_on_panels(edges, order)
    return np.concatenate([-mu[::-1], mu]), np.concatenate([w[::-1], w])


def sphere_directions(mu_order=6, phi_order=16):
    """Product rule on S^2: graded Gauss in n_z times uniform azimuth."""
    mu, wmu = symmetric_mu_rule(mu_order)
    phi = 2.0 * np.pi * (np.arange(phi_order) + 0.5) / phi_order
    s = np.sqrt(np.maximum(1.0 - mu * mu, 0.0))
    n = np.stack([s[:, None] * np.cos(phi)[None, :], s[:, None] * np.sin(phi)[None, :],
                  np.repeat(mu[:, None], phi_order, axis=1)], axis=-1)
    w = np.repeat(wmu[:, None] * (2.0 * np.pi / phi_order), phi_order, axis=1)
    return n.reshape(-1, 3), w.ravel()


# --------------------------------------------------------------------------
# rays


def exp_segment_weights(tau):
    """Node weights for int e^{-tau} f dtau with f linear between nodes.

    tau has shape (..., m+1), nondecreasing along the last axis. The
    weights are nonnegative and sum to 1 - e^{-tau_end} exactly.
    """
    tau = np.asarray(tau, dtype=float)
    d = np.diff(tau, axis=-1)
    with np.errstate(under="ignore"):
        ea = np.exp(-tau[..., :-1])
        small = d < 1e-4
        dd = np.where(small, 1.0, d)
        frac = np.where(small, d / 2 - d * d / 3 + d**3 / 8,
                        (-np.expm1(-dd) - dd * np.exp(-dd)) / dd)
        wb = ea * frac
        wa = ea * (-np.expm1(-d)) - wb
    wa = np.maximum(wa, 0.0)
    wb = np.maximum(wb, 0.0)
    out = np.zeros_like(tau)
    out[..., :-1] += wa
    out[..., 1:] += wb
    return out


def ray_samples(x, dirs, s, alpha, eps, dtau=0.1, max_dt=None, tau_cut=TAU_CUT,
                bounds=None):
    """Sample points and optical depths along x - t n, t in [0, s].

    Rays stop at optical depth tau_cut. Returns t (K, m+1), tau (K, m+1).
    Every ray gets the same number of segments, each at most dtau deep
    (and at most max_dt long).
    """
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    if alpha.is_constant:
        a = alpha.value
        t_end = np.minimum(s, tau_cut * eps / a)
        n_seg = int(np.ceil(np.max(a * t_end / eps) / dtau)) if t_end.size else 1
        if max_dt is not None and t_end.size:
            n_seg = max(n_seg, int(np.ceil(np.max(t_end) / max_dt)))
        n_seg = max(n_seg, 1)
        t = t_end[:, None] * np.linspace(0.0, 1.0, n_seg + 1)[None, :]
        return t, a * t / eps
    c0, c1 = bounds
    t_end = np.minimum(s, tau_cut * eps / c0)
    step = dtau * eps / c1
    if max_dt is not None:
        step = min(step, max_dt)
    n_seg = max(int(np.ceil(np.max(t_end) / step)) if t_end.size else 1, 1)
    t = t_end[:, None] * np.linspace(0.0, 1.0, n_seg + 1)[None, :]
    h = (t_end / n_seg)[:, None, None]
    q = t[:, :-1, None] + h * 0.5 * (_GL3_X + 1.0)  # (K, m, 3)
    pts = x - q[..., None] * dirs[:, None, None, :]
    a_vals = alpha(pts)
    inc = 0.5 * h[..., 0] * np.sum(a_vals * _GL3_W, axis=-1) / eps
    tau = np.concatenate([np.zeros((t.shape[0], 1)), np.cumsum(inc, axis=1)], axis=1)
    return t, tau


# --------------------------------------------------------------------------
# meshes and fields


def _shell_weights(r):
    # 4 pi int r^2 phi_j(r) dr for piecewise-linear hats phi_j
    a, b = r[:-1], r[1:]
    h = b - a
    w = np.zeros_like(r)
    q4 = (b**4 - a**4) / 4.0
    q3 = (b**3 - a**3) / 3.0
    w[:-1] += (b * q3 - q4) / h
    w[1:] += (q4 - a * q3) / h
    return 4.0 * np.pi * w


@dataclass
class RadialMesh:
    """Shells r_0 = 0 < ... < r_N = R of a ball (values at radii)."""

    radii: np.ndarray
    domain: ConvexDomain
    weights: np.ndarray = field(init=False)
    kind: str = field(default="radial", init=False)

    def __post_init__(self):
        self.radii = np.asarray(self.radii, dtype=float)
        self.weights = _shell_weights(self.radii)

    @classmethod
    def graded(cls, domain, eps, boundary_spacing=0.25, interior_spacing=None, growth=1.15):
        """Spacing boundary_spacing*eps at the boundary, growing to
        min(0.05 R, 5 eps) inside."""
        R = domain.radius
        hb = boundary_spacing * eps
        hi = interior_spacing if interior_spacing is not None else min(0.05 * R, 5 * eps)
        hi = max(hi, hb)
        d = [0.0]
        h = hb
        while d[-1] + h < R:
            d.append(d[-1] + h)
            h = min(h * growth, hi)
        if R - d[-1] < 0.5 * h and len(d) > 1:
            d.pop()
        d.append(R)
        return cls(R - np.asarray(d)[::-1], domain)

    @property
    def size(self):
        return self.radii.size

    @property
    def distance(self):
        return self.domain.radius - self.radii

    @property
    def points(self):
        """Representative points (r, 0, 0) + center."""
        p = np.zeros((self.size, 3))
        p[:, 0] = self.radii
        return p + np.asarray(self.domain.center)

    def interpolation_weights(self, x):
        """Linear weights in radius: (indices (P, 2), weights (P, 2))."""
        r = np.linalg.norm(as_points(x).reshape(-1, 3) - np.asarray(self.domain.center), axis=-1)
        nodes = self.radii
        r = np.minimum(r, nodes[-1])
        j = np.clip(np.searchsorted(nodes, r, side="right") - 1, 0, nodes.size - 2)
        lam = np.clip((r - nodes[j]) / (nodes[j + 1] - nodes[j]), 0.0, 1.0)
        return np.stack([j, j + 1], axis=1), np.stack([1.0 - lam, lam], axis=1)

    def interpolate(self, values, x):
        r = np.linalg.norm(as_points(x) - np.asarray(self.domain.center), axis=-1)
        return np.interp(r, self.radii, values)

    def spacing_near_boundary(self):
        return float(self.radii[-1] - self.radii[-2])


@dataclass
class CartesianMesh:
    """Cell centres of a uniform grid inside a convex domain."""

    domain: ConvexDomain
    n: int
    centers: np.ndarray = field(init=False)
    weights: np.ndarray = field(init=False)
    index: np.ndarray = field(init=False, repr=False)
    kind: str = field(default="cartesian", init=False)

    def __post_init__(self):
        n = int(self.n)
        if not 4 <= n <= 32:
            raise ValueError("cartesian mesh needs 4 <= n <= 32 cells per axis")
        a = np.asarray(self.domain.semi_axes)
        c = np.asarray(self.domain.center)
        self.h = 2.0 * a / n
        self.origin = c - a
        ax = [self.origin[k] + (np.arange(n) + 0.5) * self.h[k] for k in range(3)]
        X, Y, Z = np.meshgrid(*ax, indexing="ij")
        pts = np.stack([X, Y, Z], axis=-1).reshape(-1, 3)
        inside = self.domain.contains(pts)
        self.index = np.full(n**3, -1, dtype=np.int64)
        self.index[inside] = np.arange(np.count_nonzero(inside))
        self.index = self.index.reshape(n, n, n)
        self.centers = pts[inside]
        self.weights = self._cut_volumes(pts, inside)

    def _cut_volumes(self, pts, inside, order=8, sub=16):
        # volume of each cell inside the ellipsoid: integrate the clipped
        # z-extent over the cell's (x, y) footprint, panels sub x sub
        n = int(self.n)
        a = np.asarray(self.domain.semi_axes)
        c = np.asarray(self.domain.center)
        g, gw = np.polynomial.legendre.leggauss(order)
        frac = ((np.arange(sub)[:, None] + 0.5 * (g[None, :] + 1.0)) / sub).ravel()
        fw = np.tile(gw / (2.0 * sub), sub)
        vols = np.zeros(pts.shape[0])
        corner = np.array([[i, j, l] for i in (-0.5, 0.5) for j in (-0.5, 0.5) for l in (-0.5, 0.5)])
        lv = self.domain.level(pts[:, None, :] + corner[None] * self.h)
        full = np.all(lv <= 0, axis=1)
        vols[full] = np.prod(self.h)
        # bounding-box test in the ellipsoid's scaled frame
        near = np.abs(pts - c) - 0.5 * self.h < a
        partial = ~full & np.all(near, axis=1)
        for k in np.nonzero(partial)[0]:
            p = pts[k]
            lo = p - 0.5 * self.h
            hi = p + 0.5 * self.h
            xs = lo[0] + self.h[0] * frac
            ys = lo[1] + self.h[1] * frac
            qx = ((xs - c[0]) / a[0]) ** 2
            qy = ((ys - c[1]) / a[1]) ** 2
            rem = 1.0 - qx[:, None] - qy[None, :]
            half = a[2] * np.sqrt(np.maximum(rem, 0.0))
            top = np.minimum(c[2] + half, hi[2])
            bot = np.maximum(c[2] - half, lo[2])
            ext = np.where(rem > 0, np.maximum(top - bot, 0.0), 0.0)
            vols[k] = self.h[0] * self.h[1] * np.sum(fw[:, None] * fw[None, :] * ext)
        # cells whose centre is outside hand their sliver to the nearest inside cell
        w = vols[inside].copy()
        out = np.nonzero(~inside & (vols > 0))[0]
        if out.size:
            _, idx = cKDTree(self.centers).query(pts[out])
            np.add.at(w, idx, vols[out])
        return w

    @property
    def size(self):
        return self.centers.shape[0]

    @property
    def points(self):
        return self.centers

    @property
    def distance(self):
        return self.domain.signed_distance(self.centers)

    def interpolation_weights(self, x):
        """Trilinear weights onto inside cells, renormalised over inside corners.

        Returns (indices (P, 8), weights (P, 8)); points with no inside
        corner fall back to the nearest cell centre.
        """
        x = as_points(x).reshape(-1, 3)
        n = int(self.n)
        f = (x - self.origin) / self.h - 0.5
        base = np.floor(f).astype(np.int64)
        lam = f - base
        idx = np.empty((x.shape[0], 8), dtype=np.int64)
        wts = np.empty((x.shape[0], 8))
        k = 0
        for i in (0, 1):
            for j in (0, 1):
                for l in (0, 1):
                    ii = np.clip(base[:, 0] + i, 0, n - 1)
                    jj = np.clip(base[:, 1] + j, 0, n - 1)
                    ll = np.clip(base[:, 2] + l, 0, n - 1)
                    cell = self.index[ii, jj, ll]
                    w = ((lam[:, 0] if i else 1 - lam[:, 0])
                         * (lam[:, 1] if j else 1 - lam[:, 1])
                         * (lam[:, 2] if l else 1 - lam[:, 2]))
                    w = np.where(cell >= 0, np.clip(w, 0.0, None), 0.0)
                    idx[:, k] = np.maximum(cell, 0)
                    wts[:, k] = w
                    k += 1
        tot = wts.sum(axis=1)
        lost = tot <= 1e-14
        if np.any(lost):
            _, near = cKDTree(self.centers).query(x[lost])
            idx[lost] = near[:, None]
            wts[lost] = 0.0
            wts[lost, 0] = 1.0
            tot = wts.sum(axis=1)
        return idx, wts / tot[:, None]

    def interpolate(self, values, x):
        shape = as_points(x).shape[:-1]
        idx, w = self.interpolation_weights(x)
        return np.sum(w * np.asarray(values)[idx], axis=1).reshape(shape)


@dataclass
class SlabMesh:
    """Nodes across a slab, with optical depth from the left face."""

    x: np.ndarray
    tau: np.ndarray
    slab: Slab
    weights: np.ndarray = field(init=False)
    kind: str = field(default="slab", init=False)

    def __post_init__(self):
        h = np.diff(self.x)
        self.weights = np.zeros_like(self.x)
        self.weights[:-1] += 0.5 * h
        self.weights[1:] += 0.5 * h

    @property
    def size(self):
        return self.x.size

    @property
    def distance(self):
        return self.slab.signed_distance(self.x)

    @property
    def points(self):
        p = np.zeros((self.size, 3))
        p[:, 0] = self.x
        return p

    def interpolate(self, values, x):
        return np.interp(as_points(x)[..., 0], self.x, values)


@dataclass
class DomainField:
    """Solution values on a mesh, with the solve metadata."""

    mesh: object
    values: np.ndarray
    eps: float
    residual: float = np.nan
    iterations: int = 0
    contraction: float = np.nan
    rule: object = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.size,):
            raise ValueError("field values must match the mesh")

    def __call__(self, x):
        return self.mesh.interpolate(self.values, x)

    @property
    def weights(self):
        return self.mesh.weights


# --------------------------------------------------------------------------
# operator assembly


@dataclass(frozen=True)
class RayRule:
    """Angular and along-ray quadrature shared by assembly and reconstruction.

    radial : mu-rule about the radial direction (azimuth exact by symmetry)
    cartesian : product rule on S^2; rows are mass-corrected to 1 - E(x)
    with E the escape probability from a finer rule.
    """

    path: str
    mu_order: int = 6
    phi_order: int = 16
    dtau: float = 0.1
    max_dt: float = None
    escape_mu_order: int = 8
    escape_phi_order: int = 64
    source_order: int = 16

    def directions(self, x, center):
        if self.path == "radial":
            mu, w = symmetric_mu_rule(self.mu_order)
            d = np.asarray(x, dtype=float) - np.asarray(center, dtype=float)
            r = np.linalg.norm(d)
            axis = d / r if r > 0 else np.array([1.0, 0.0, 0.0])
            side = np.cross(axis, [0.0, 0.0, 1.0])
            if np.linalg.norm(side) < 0.5:
                side = np.cross(axis, [0.0, 1.0, 0.0])
            side /= np.linalg.norm(side)
            sin = np.sqrt(np.maximum(1.0 - mu * mu, 0.0))
            return mu[:, None] * axis + sin[:, None] * side, 2.0 * np.pi * w
        return sphere_directions(self.mu_order, self.phi_order)

    def scatter(self, x, domain, alpha, eps, bounds):
        """Ray points (K, m+1, 3), weights (K, m+1) with sum 1 - E_rule,
        and the escape probability E of this rule."""
        dirs, wd = self.directions(x, domain.center)
        s = domain.ray_exit(x[None, :], dirs)
        t, tau = ray_samples(x, dirs, s, alpha, eps, dtau=self.dtau, max_dt=self.max_dt,
                             bounds=bounds)
        wn = exp_segment_weights(tau) * (wd[:, None] / (4.0 * np.pi))
        pts = x - t[..., None] * dirs[:, None, :]
        with np.errstate(under="ignore"):
            escape = float(np.sum(wd * np.exp(-tau[:, -1]))) / (4.0 * np.pi)
        return pts, wn, escape

    def fine_escape(self, x, domain, alpha, eps, bounds):
        fine, wf = sphere_directions(self.escape_mu_order, self.escape_phi_order)
        c0 = None if alpha.is_constant else bounds[0]
        tau = alpha.optical_depth(x[None, :], fine, domain.ray_exit(x[None, :], fine), eps, c0=c0)
        with np.errstate(under="ignore"):
            return float(np.sum(wf * np.exp(-tau))) / (4.0 * np.pi)

    def node_terms(self, x, domain, source, alpha, eps, bounds):
        """(points, weights, direct source term) at one point.

        weights already carry the mass correction, so that
        u(x) = sum weights * u(points) + direct is the discrete equation.
        """
        pts, wn, escape = self.scatter(x, domain, alpha, eps, bounds)
        if self.path == "radial":
            if not source.is_isotropic():
                raise ValueError("the radial rule needs an isotropic source")
            return pts, wn, 4.0 * np.pi * source.level * escape
        fine = self.fine_escape(x, domain, alpha, eps, bounds)
        mass = 1.0 - escape
        wn = wn * ((1.0 - fine) / mass) if mass > 0 else wn
        if source.is_isotropic():
            return pts, wn, 4.0 * np.pi * source.level * fine
        ns, ws = source.sphere_rule(self.source_order)
        c0 = None if alpha.is_constant else bounds[0]
        tau = alpha.optical_depth(x[None, :], ns, domain.ray_exit(x[None, :], ns), eps, c0=c0)
        with np.errstate(under="ignore"):
            return pts, wn, float(np.sum(ws * np.exp(-tau)))


def assemble_rows(mesh, rule, source, alpha, eps, bounds):
    """Dense kernel matrix W and source vector S with u = W u + S."""
    N = mesh.size
    W = np.zeros((N, N))
    S = np.zeros(N)
    for i, x in enumerate(mesh.points):
        pts, wn, direct = rule.node_terms(x, mesh.domain, source, alpha, eps, bounds)
        idx, lw = mesh.interpolation_weights(pts.reshape(-1, 3))
        W[i] = np.bincount(idx.ravel(), (lw * wn.reshape(-1, 1)).ravel(), minlength=N)
        S[i] = direct
    return W, S


def picard_solve(W, S, tol=1e-10, max_iter=500000, u0=None):
    """Fixed point u = W u + S from u0 = 0.

    Stops when the a-posteriori error bound q/(1-q) |du| (q the measured
    ratio of successive updates) falls below tol * max(|u|). Raises if
    the measured ratio reaches 1 or an iterate goes negative.
    """
    u = np.zeros_like(S) if u0 is None else np.array(u0, dtype=float)
    prev = None
    q = 0.0
    row_mass = float(np.max(W.sum(axis=1))) if W.size else 0.0
    for it in range(1, int(max_iter) + 1):
        nxt = W @ u + S
        du = float(np.max(np.abs(nxt - u)))
        u = nxt
        scale = max(float(np.max(np.abs(u))), 1e-300)
        if prev is not None and prev > 0 and du > 0:
            q = max(du / prev, 0.0)
            if q >= 1.0 and it > 10:
                raise ArithmeticError(f"fixed-point iteration not contracting (ratio {q:.6f})")
        bound_q = max(q, row_mass if prev is None else q)
        if du == 0.0 or (bound_q < 1 and bound_q / (1 - bound_q) * du <= tol * scale):
            return u, it, q
        prev = du
    warnings.warn("fixed-point iteration hit max_iter", RuntimeWarning, stacklevel=2)
    return u, int(max_iter), q


class TransportSolver(BaseEstimator):
    """Solve for u^eps by fixed-point iteration on an assembled operator.

    Parameters
    ----------
    eps : scale parameter (mean free path over domain size).
    path : "auto", "radial" (ball, isotropic source) or "cartesian".
    boundary_spacing : radial spacing at the boundary in units of eps.
    mu_order, dtau : angular order per panel and optical-depth step on rays.
    n_cells, phi_order, source_order : cartesian path resolution.
    tol, max_iter : fixed-point stopping rule (relative error bound).
    """

    def __init__(self, eps=0.1, path="auto", boundary_spacing=0.25, interior_spacing=None,
                 mu_order=6, dtau=0.1, n_cells=16, phi_order=16, cartesian_mu_order=2,
                 cartesian_dtau=0.25, source_order=16, tol=1e-10, max_iter=500000):
        self.eps = eps
        self.path = path
        self.boundary_spacing = boundary_spacing
        self.interior_spacing = interior_spacing
        self.mu_order = mu_order
        self.dtau = dtau
        self.n_cells = n_cells
        self.phi_order = phi_order
        self.cartesian_mu_order = cartesian_mu_order
        self.cartesian_dtau = cartesian_dtau
        self.source_order = source_order
        self.tol = tol
        self.max_iter = max_iter

    def _choose_path(self, domain, source, alpha):
        if self.path != "auto":
            return self.path
        radial_alpha = alpha.is_constant or (
            alpha.kind == "radial" and np.allclose(alpha.center, domain.center))
        if domain.is_ball and source.is_isotropic() and radial_alpha:
            return "radial"
        return "cartesian"

    def assemble(self, domain, source, alpha=None):
        """(mesh, rule, W, S) for the chosen path without solving."""
        eps = check_positive(self.eps, "eps")
        alpha = AbsorptionField.constant(1.0) if alpha is None else alpha
        if not isinstance(domain, ConvexDomain):
            raise TypeError("TransportSolver needs a ConvexDomain; use SlabSolver for slabs")
        bounds = alpha.bounds(domain)
        path = self._choose_path(domain, source, alpha)
        if path == "radial":
            if not (domain.is_ball and source.is_isotropic()):
                raise ValueError("radial path needs a ball and an isotropic source")
            mesh = RadialMesh.graded(domain, eps, self.boundary_spacing, self.interior_spacing)
            rule = RayRule("radial", mu_order=self.mu_order, dtau=self.dtau)
        elif path == "cartesian":
            mesh = CartesianMesh(domain, self.n_cells)
            rule = RayRule("cartesian", mu_order=self.cartesian_mu_order,
                           phi_order=self.phi_order, dtau=self.cartesian_dtau,
                           max_dt=0.5 * float(np.min(mesh.h)), source_order=self.source_order)
        else:
            raise ValueError(f"unknown path {path!r}")
        W, S = assemble_rows(mesh, rule, source, alpha, eps, bounds)
        return mesh, rule, W, S

    def fit(self, domain, source, alpha=None):
        alpha = AbsorptionField.constant(1.0) if alpha is None else alpha
        mesh, rule, W, S = self.assemble(domain, source, alpha)
        u, it, q = picard_solve(W, S, self.tol, self.max_iter)
        scale = max(float(np.max(np.abs(u))), 1e-300)
        if np.min(u) < -1e-10 * scale:
            raise ArithmeticError("negative values in the fixed point")
        resid = float(np.max(np.abs(u - W @ u - S)))
        self.operator_ = W
        self.source_term_ = S
        self.field_ = DomainField(mesh, u, float(self.eps), resid, it, q, rule)
        self.domain_ = domain
        self.source_ = source
        self.alpha_ = alpha
        self.n_iter_ = it
        self.contraction_ = q
        self.residual_ = resid
        return self

    def predict(self, x):
        check_is_fitted(self, "field_")
        return self.field_(x)


def solve_ueps(domain, source, alpha, eps, **kwargs):
    """Convenience wrapper returning the DomainField."""
    return TransportSolver(eps=eps, **kwargs).fit(domain, source, alpha).field_


# --------------------------------------------------------------------------
# slab validation geometry


def _optical_coordinate(slab, alpha, eps, fine=4096):
    # A(x) = integral of alpha from the left face, tabulated finely
    a, b = slab.faces
    edges = np.linspace(a, b, fine + 1)
    h = edges[1] - edges[0]
    mids = edges[:-1, None] + 0.5 * h * (_GL3_X + 1.0)
    pts = np.zeros(mids.shape + (3,))
    pts[..., 0] = mids
    inc = 0.5 * h * np.sum(alpha(pts) * _GL3_W, axis=1)
    A = np.concatenate([[0.0], np.cumsum(inc)])
    return edges, A / eps


def slab_tau_grid(total, h0=1e-3, h_max=0.05, growth=1.1):
    """Graded at both faces, uniform inside, on [0, total]."""
    half = HalfLineGrid.graded(0.5 * total, h0, min(h_max, 0.25 * total), growth).nodes
    return np.concatenate([half, total - half[-2::-1]])


class SlabSolver(BaseEstimator):
    """u^eps across a slab, solved in optical depth.

    In tau = (1/eps) * integral of alpha dx the equation becomes
    u(tau) = int_0^T K(tau - s) u(s) ds + G_left(tau) + G_right(T - tau)
    with planar sources from each face; it is solved directly.
    """

    def __init__(self, eps=0.1, h0=1e-3, h_max=0.05, growth=1.1, mu_order=16):
        self.eps = eps
        self.h0 = h0
        self.h_max = h_max
        self.growth = growth
        self.mu_order = mu_order

    def fit(self, slab, source, alpha=None):
        eps = check_positive(self.eps, "eps")
        alpha = AbsorptionField.constant(1.0) if alpha is None else alpha
        edges, A = _optical_coordinate(slab, alpha, eps)
        T = float(A[-1])
        tau = slab_tau_grid(T, self.h0, self.h_max, self.growth)
        x = np.interp(tau, A, edges)
        # exact depth at the chosen positions
        tau = np.interp(x, edges, A)
        tau[0], tau[-1] = 0.0, T
        W = hat_weights(tau, tau)
        left = planar_source(source, np.array([-1.0, 0.0, 0.0]), tau, mu_order=self.mu_order)
        right = planar_source(source, np.array([1.0, 0.0, 0.0]), T - tau, mu_order=self.mu_order)
        S = left + right
        M = np.eye(tau.size) - W
        u = np.linalg.solve(M, S)
        resid = float(np.max(np.abs(M @ u - S)))
        if np.min(u) < -1e-10 * max(np.max(np.abs(u)), 1e-300):
            raise ArithmeticError("negative values in the slab solution")
        mesh = SlabMesh(x, tau, slab)
        self.field_ = DomainField(mesh, u, eps, resid, 1, float(np.max(W.sum(axis=1))))
        self.operator_ = W
        self.source_term_ = S
        self.optical_table_ = (edges, A)
        self.alpha_ = alpha
        self.source_ = source
        self.domain_ = slab
        return self

    def predict(self, x):
        check_is_fitted(self, "field_")
        return self.field_(x)


# --------------------------------------------------------------------------
# diagnostics


def domain_operator(f, x, domain, alpha, eps, mu_order=8, phi_order=32, dtau=0.05,
                    tau_cut=TAU_CUT):
    """(L f)(x) = f(x) - integral_Omega K_eps(x; eta) f(eta) d eta.

    f is a callable on points; the kernel integral is done along rays with
    f sampled at the exact ray points.
    """
    alpha = AbsorptionField.constant(1.0) if alpha is None else alpha
    pts = np.atleast_2d(as_points(x))
    dirs, wd = sphere_directions(mu_order, phi_order)
    bounds = alpha.bounds(domain)
    out = np.empty(pts.shape[0])
    for i, p in enumerate(pts):
        s = domain.ray_exit(p[None, :], dirs)
        t, tau = ray_samples(p, dirs, s, alpha, eps, dtau=dtau, tau_cut=tau_cut, bounds=bounds)
        wn = exp_segment_weights(tau)
        fp = f(p[None, :] - t[..., None] * dirs[:, None, :])
        integral = np.sum(wd[:, None] * wn * fp) / (4.0 * np.pi)
        out[i] = float(f(p[None, :])[0]) - integral
    return out


def reconstruct_intensity(field, source, alpha, x, n, dtau=0.05):
    """J(x, n) = g(n) e^{-tau_s} + int_0^{tau_s} e^{-tau} u(x - t n) / (4 pi) dtau.

    Directions n may be a single vector or an array (K, 3).
    """
    alpha = AbsorptionField.constant(1.0) if alpha is None else alpha
    domain = field.mesh.domain
    p = as_points(x)
    dirs = np.atleast_2d(as_points(n))
    s = domain.ray_exit(p[None, :], dirs)
    t, tau = ray_samples(p, dirs, s, alpha, field.eps, dtau=dtau, bounds=alpha.bounds(domain))
    wn = exp_segment_weights(tau)
    up = field(p[None, :] - t[..., None] * dirs[:, None, :])
    with np.errstate(under="ignore"):
        direct = source(dirs) * np.exp(-tau[:, -1])
    out = direct + np.sum(wn * up, axis=1) / (4.0 * np.pi)
    return out if np.ndim(n) > 1 else float(out[0])


def flux_divergence_residual(field, source, alpha, probes):
    """|u(x) - integral over S^2 of J(x, .)| / max(u(x), 1) at each probe.

    The sphere integral of the intensity is taken with the solver's own
    ray rule, so at mesh points the residual is the discrete equation's
    residual; between mesh points it also contains interpolation error.
    """
    if field.rule is None:
        raise ValueError("field carries no ray rule (not produced by TransportSolver)")
    alpha = AbsorptionField.constant(1.0) if alpha is None else alpha
    domain = field.mesh.domain
    bounds = alpha.bounds(domain)
    pts = np.atleast_2d(as_points(probes))
    out = np.empty(pts.shape[0])
    for i, p in enumerate(pts):
        rp, wn, direct = field.rule.node_terms(p, domain, source, alpha, field.eps, bounds)
        mean_j = direct + float(np.sum(wn * field(rp)))
        u = float(field(p[None, :])[0])
        out[i] = abs(u - mean_j) / max(abs(u), 1.0)
    return out


def boundary_layer_match(field, profile_at, alpha, points, normals, t_count=32):
    """Sup over t in (0, sqrt(eps)) of |u^eps(p - t N) - ubar_p(alpha(p) t / eps)|.

    profile_at(k) returns the half-line profile (callable in depth) for
    boundary sample k. One value per sample.
    """
    alpha = AbsorptionField.constant(1.0) if alpha is None else alpha
    eps = field.eps
    pts = np.atleast_2d(as_points(points))
    nrm = np.atleast_2d(as_points(normals))
    t = np.sqrt(eps) * (np.arange(1, t_count + 1) / t_count)
    out = np.empty(pts.shape[0])
    for k, (p, nv) in enumerate(zip(pts, nrm)):
        a = float(alpha(p[None, :])[0])
        inner = p[None, :] - t[:, None] * nv[None, :]
        prof = profile_at(k)
        out[k] = float(np.max(np.abs(field(inner) - prof(a * t / eps))))
    return out


def kernel_density(x, eta, alpha, eps):
    """K_eps(x; eta) = alpha(eta) e^{-tau(x, eta)} / (4 pi eps |x - eta|^2).

    tau is the optical depth of the straight segment from x to eta.
    """
    x = as_points(x)
    eta = np.atleast_2d(as_points(eta))
    d = eta - x
    dist = np.linalg.norm(d, axis=-1)
    if np.any(dist == 0):
        raise ValueError("kernel density is singular at eta = x")
    tau = alpha.optical_depth(x[None, :], -d / dist[:, None], dist, eps)
    with np.errstate(under="ignore"):
        return alpha(eta) * np.exp(-tau) / (4.0 * np.pi * eps * dist**2)


def kernel_mass(x, alpha, eps, radius, mu_order=8, phi_order=32, t_order=8):
    """Integral of K_eps(x; .) over the ball of the given radius about x.

    Spherical coordinates about x with Gauss-Legendre in distance on
    panels of length <= eps / alpha_max. The radial Jacobian cancels the
    1/|x - eta|^2 of the density; optical depths are accumulated panel by
    panel. Returns (mass, escape) where the exact value of mass is
    1 - escape, escape being the direction mean of e^{-tau(x, radius)}.
    """
    x = as_points(x)
    dirs, wd = sphere_directions(mu_order, phi_order)
    probe = np.linspace(0.0, radius, 257)
    c1 = float(np.max(alpha(x + probe[:, None, None] * dirs[None])))
    n_pan = max(int(np.ceil(radius * c1 / eps)), 1)
    g, gw = np.polynomial.legendre.leggauss(t_order)
    h = radius / n_pan
    # nodes inside each panel and the partial integrals from the panel start
    frac = 0.5 * (g + 1.0)
    starts = np.arange(n_pan) * h
    t = starts[:, None] + frac * h  # (P, q)
    sub = frac[:, None] * frac[None, :]  # (q, q) fractions of h
    offs = starts[:, None, None] + sub[None] * h  # (P, q, q)
    mass = 0.0
    escape = 0.0
    for lo in range(0, dirs.shape[0], 16):
        dk, wk = dirs[lo:lo + 16], wd[lo:lo + 16]
        a_sub = alpha(x + offs[None, ..., None] * dk[:, None, None, None, :])
        partial = np.sum(a_sub * gw, axis=-1) * 0.5 * frac * h / eps  # (k, P, q)
        a_nodes = alpha(x + t[None, ..., None] * dk[:, None, None, :])  # (k, P, q)
        panel = np.sum(a_nodes * gw, axis=-1) * 0.5 * h / eps  # (k, P)
        before = np.concatenate([np.zeros((dk.shape[0], 1)), np.cumsum(panel, axis=1)[:, :-1]],
                                axis=1)
        tau = before[..., None] + partial
        with np.errstate(under="ignore"):
            dens_t2 = a_nodes * np.exp(-tau) / (4.0 * np.pi * eps)  # density times t^2
            radial = np.sum(dens_t2 * gw, axis=-1).sum(axis=-1) * 0.5 * h
            escape += float(np.sum(wk * np.exp(-np.sum(panel, axis=1)))) / (4.0 * np.pi)
        mass += float(np.sum(wk * radial))
    return mass, escape
