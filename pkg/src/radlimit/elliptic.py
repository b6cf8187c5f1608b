"""Limit Dirichlet problem -div((1/alpha) grad v) = 0 with boundary data u_inf."""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import spsolve
from sklearn.base import BaseEstimator

from ._validation import as_points, check_is_fitted
from .absorption import AbsorptionField
from .geometry import ConvexDomain, Slab
from .transport import CartesianMesh, RadialMesh, SlabMesh


@dataclass
class LimitField:
    """Values of the limit v on a transport-style mesh plus its boundary data."""

    mesh: object
    values: np.ndarray
    boundary_points: np.ndarray = None
    boundary_values: np.ndarray = None
    residual: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.size,):
            raise ValueError("limit values must match the mesh")

    def __call__(self, x):
        return self.mesh.interpolate(self.values, x)

    def data_range(self):
        if self.boundary_values is None or len(self.boundary_values) == 0:
            return float(np.min(self.values)), float(np.max(self.values))
        return float(np.min(self.boundary_values)), float(np.max(self.boundary_values))


def _boundary_callable(data):
    if hasattr(data, "predict"):
        return data.predict
    if callable(data):
        return data
    value = float(data)
    return lambda p: np.full(as_points(p).shape[:-1], value)


def solve_limit_radial(alpha, boundary_value, mesh):
    """Radial problem on a ball: (r^2 v' / alpha)' = 0, bounded at 0, v(R) = U.

    The flux r^2 v' / alpha is constant and must vanish at r = 0, so v = U.
    """
    if not isinstance(mesh, RadialMesh):
        raise TypeError("solve_limit_radial needs a RadialMesh")
    if alpha is not None and alpha.kind not in ("constant", "radial"):
        raise ValueError("solve_limit_radial needs a constant or radial absorption")
    U = float(boundary_value)
    R = mesh.domain.radius
    return LimitField(mesh, np.full(mesh.size, U), np.array([[R, 0.0, 0.0]]), np.array([U]))


def _harmonic(a, b):
    return 2.0 * a * b / (a + b)


def solve_limit_3d(alpha, boundary_data, mesh, check=True):
    """Shortley-Weller flux-form finite differences on the cartesian mesh.

    Unknowns live at the inside cell centres. Along each axis the stencil
    reaches the neighbouring centre or, if that is outside, the boundary
    intersection (found exactly) where the data is imposed. Face
    coefficients are harmonic means of 1/alpha at the two stencil ends,
    so off-diagonals are nonpositive and rows are diagonally dominant.
    The sparse system is solved directly.
    """
    if not isinstance(mesh, CartesianMesh):
        raise TypeError("solve_limit_3d needs a CartesianMesh")
    alpha = AbsorptionField.constant(1.0) if alpha is None else alpha
    data = _boundary_callable(boundary_data)
    x = mesh.centers
    N = mesh.size
    n = int(mesh.n)
    k_center = 1.0 / alpha(x)
    ijk = np.argwhere(mesh.index >= 0)
    order = mesh.index[ijk[:, 0], ijk[:, 1], ijk[:, 2]]
    ijk = ijk[np.argsort(order)]
    rows, cols, vals = [], [], []
    rhs = np.zeros(N)
    diag = np.zeros(N)
    bpts, bvals = [], []
    for axis in range(3):
        h = mesh.h[axis]
        for sign in (-1, 1):
            step = np.zeros(3)
            step[axis] = sign
            nb = ijk.copy()
            nb[:, axis] += sign
            valid = (nb[:, axis] >= 0) & (nb[:, axis] < n)
            nb_idx = np.full(N, -1)
            nb_idx[valid] = mesh.index[nb[valid, 0], nb[valid, 1], nb[valid, 2]]
            inner = nb_idx >= 0
            dist = np.full(N, h)
            cut = ~inner
            if np.any(cut):
                dist[cut] = mesh.domain.ray_exit(x[cut], -step)
                dist[cut] = np.minimum(dist[cut], h)
            far_pts = x + dist[:, None] * step
            k_far = np.where(inner, k_center[np.maximum(nb_idx, 0)], 1.0 / alpha(far_pts))
            kf = _harmonic(k_center, k_far)
            # opposite-side distance for the Shortley-Weller 2/(h_l + h_r) factor
            opp = np.full(N, h)
            nb2 = ijk.copy()
            nb2[:, axis] -= sign
            ok2 = (nb2[:, axis] >= 0) & (nb2[:, axis] < n)
            idx2 = np.full(N, -1)
            idx2[ok2] = mesh.index[nb2[ok2, 0], nb2[ok2, 1], nb2[ok2, 2]]
            if np.any(idx2 < 0):
                miss = idx2 < 0
                opp[miss] = np.minimum(mesh.domain.ray_exit(x[miss], step), h)
            coef = 2.0 / (dist + opp) * kf / dist
            diag += coef
            ii = np.nonzero(inner)[0]
            rows.append(ii)
            cols.append(nb_idx[inner])
            vals.append(-coef[inner])
            if np.any(cut):
                cc = np.nonzero(cut)[0]
                g = data(far_pts[cc])
                rhs[cc] += coef[cc] * g
                bpts.append(far_pts[cc])
                bvals.append(g)
    rows.append(np.arange(N))
    cols.append(np.arange(N))
    vals.append(diag)
    A = coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                   shape=(N, N)).tocsr()
    v = spsolve(A.tocsc(), rhs)
    resid = float(np.max(np.abs(A @ v - rhs)) / max(np.max(np.abs(rhs)), 1e-300))
    if resid > 1e-8:
        raise ArithmeticError(f"elliptic solve residual {resid:.2e} above 1e-8")
    bp = np.concatenate(bpts) if bpts else np.zeros((0, 3))
    bv = np.concatenate(bvals) if bvals else np.zeros(0)
    field = LimitField(mesh, v, bp, bv, resid)
    if check and bv.size:
        lo, hi = field.data_range()
        slack = 1e-10 * max(abs(lo), abs(hi), 1.0)
        if np.min(v) < lo - slack or np.max(v) > hi + slack:
            raise ArithmeticError("discrete maximum principle violated")
    return field


def solve_limit_slab(alpha, left_value, right_value, mesh, eps=None):
    """Exact 1D limit across a slab: linear in A(x) = integral of alpha.

    The flux (1/alpha) v' is constant, so v is affine in A(x).
    """
    if not isinstance(mesh, SlabMesh):
        raise TypeError("solve_limit_slab needs a SlabMesh")
    tau = mesh.tau
    frac = (tau - tau[0]) / (tau[-1] - tau[0])
    v = left_value + (right_value - left_value) * frac
    faces = np.array([[mesh.x[0], 0.0, 0.0], [mesh.x[-1], 0.0, 0.0]])
    return LimitField(mesh, v, faces, np.array([left_value, right_value], dtype=float))


def compare_fields(u_eps, v, margin):
    """(sup error, L2 error) of u_eps - v over mesh points with d(x) >= margin.

    v may be a LimitField on any mesh or any callable on points. The L2
    norm uses the mesh quadrature weights.
    """
    margin = float(margin)
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    if margin == 0:
        warnings.warn("margin 0 includes the boundary layer; no convergence is expected there",
                      UserWarning, stacklevel=2)
    mesh = u_eps.mesh
    mask = mesh.distance >= margin
    if not np.any(mask):
        raise ValueError(f"no mesh points at distance >= {margin} from the boundary")
    if isinstance(v, LimitField) and v.mesh is mesh:
        vv = v.values
    else:
        vv = v(mesh.points)
    diff = np.abs(np.asarray(u_eps.values) - vv)[mask]
    w = mesh.weights[mask]
    return float(np.max(diff)), float(np.sqrt(np.sum(w * diff**2)))


class LimitSolver(BaseEstimator):
    """Estimator wrapper choosing the radial, slab or cartesian limit solver.

    fit(mesh, boundary_data, alpha): boundary_data is a fitted
    BoundaryTemperatureMap, any callable on boundary points, a constant,
    or (left, right) face values on a slab mesh.
    """

    def __init__(self, check_maximum_principle=True):
        self.check_maximum_principle = check_maximum_principle

    def fit(self, mesh, boundary_data, alpha=None):
        alpha = AbsorptionField.constant(1.0) if alpha is None else alpha
        if isinstance(mesh, RadialMesh):
            R = mesh.domain.radius
            p = np.array([[R, 0.0, 0.0]]) + np.asarray(mesh.domain.center)
            U = float(_boundary_callable(boundary_data)(p)[0])
            self.field_ = solve_limit_radial(alpha, U, mesh)
        elif isinstance(mesh, SlabMesh):
            left, right = boundary_data
            self.field_ = solve_limit_slab(alpha, left, right, mesh)
        elif isinstance(mesh, CartesianMesh):
            self.field_ = solve_limit_3d(alpha, boundary_data, mesh,
                                         check=self.check_maximum_principle)
        else:
            raise TypeError(f"unsupported mesh {type(mesh).__name__}")
        return self

    def predict(self, x):
        check_is_fitted(self, "field_")
        return self.field_(x)


__all__ = ["LimitField", "LimitSolver", "compare_fields", "solve_limit_3d",
           "solve_limit_radial", "solve_limit_slab"]
