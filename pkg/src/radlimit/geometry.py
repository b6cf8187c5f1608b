"""Convex domains, boundary projection and boundary-adapted frames."""

from dataclasses import dataclass

import numpy as np

from ._validation import as_points, as_unit_vectors


@dataclass(frozen=True)
class ConvexDomain:
    """Axis-aligned ellipsoid (a ball when all semi-axes agree).

    Parameters
    ----------
    semi_axes : three positive lengths.
    center : centre of the ellipsoid.
    """

    semi_axes: tuple
    center: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        a = np.asarray(self.semi_axes, dtype=float).ravel()
        c = np.asarray(self.center, dtype=float).ravel()
        if a.size != 3 or c.size != 3:
            raise ValueError("semi_axes and center need three components")
        if not np.all(np.isfinite(a)) or np.any(a <= 0):
            raise ValueError("semi-axes must be positive and finite")
        if not np.all(np.isfinite(c)):
            raise ValueError("center must be finite")
        object.__setattr__(self, "semi_axes", tuple(float(v) for v in a))
        object.__setattr__(self, "center", tuple(float(v) for v in c))

    @classmethod
    def ball(cls, radius=1.0, center=(0.0, 0.0, 0.0)):
        return cls((radius, radius, radius), center)

    @property
    def is_ball(self):
        a = self.semi_axes
        return a[0] == a[1] == a[2]

    @property
    def radius(self):
        if not self.is_ball:
            raise AttributeError("radius is defined for balls only")
        return self.semi_axes[0]

    @property
    def diameter(self):
        return 2.0 * max(self.semi_axes)

    @property
    def volume(self):
        a = self.semi_axes
        return 4.0 * np.pi * a[0] * a[1] * a[2] / 3.0

    @property
    def min_curvature_radius(self):
        """Smallest principal radius of curvature, min a_j^2 / max a_i."""
        a = self.semi_axes
        return min(a) ** 2 / max(a)

    def _local(self, x):
        return as_points(x) - np.asarray(self.center)

    def level(self, x):
        """sum (x_i / a_i)^2 - 1: negative inside, zero on the boundary."""
        q = self._local(x) / np.asarray(self.semi_axes)
        return np.sum(q * q, axis=-1) - 1.0

    def contains(self, x, strict=True):
        lv = self.level(x)
        return lv < 0 if strict else lv <= 0

    def normal(self, p):
        """Outward unit normal at (or the level-set normal through) p."""
        g = self._local(p) / np.asarray(self.semi_axes) ** 2
        nrm = np.linalg.norm(g, axis=-1, keepdims=True)
        if np.any(nrm == 0):
            raise ValueError("normal undefined at the center")
        return g / nrm

    def ray_exit(self, x, n):
        """Distance s >= 0 with x - s n on the boundary, for x inside.

        n is the propagation direction; the ray is traced backwards.
        Shapes broadcast; raises for points outside the closed domain.
        """
        xl = self._local(x)
        n = as_unit_vectors(n)
        if np.any(self.level(x) > 1e-12):
            raise ValueError("ray_exit needs points inside the domain")
        inv = 1.0 / np.asarray(self.semi_axes) ** 2
        a = np.sum(n * n * inv, axis=-1)
        b = -2.0 * np.sum(xl * n * inv, axis=-1)
        c = np.minimum(np.sum(xl * xl * inv, axis=-1) - 1.0, 0.0)
        disc = np.sqrt(np.maximum(b * b - 4.0 * a * c, 0.0))
        # larger root of a s^2 + b s + c with c <= 0, in a cancellation-free form
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(b <= 0, (-b + disc) / (2.0 * a), -2.0 * c / (b + disc))
        return np.where(np.isfinite(s), np.maximum(s, 0.0), 0.0)

    def project_boundary(self, x, tol=1e-13, max_iter=200):
        """Closest boundary point to each x, with its outward normal.

        Solves the Lagrange condition p_i = a_i^2 x_i / (a_i^2 + t) for the
        multiplier t by safeguarded Newton iteration on
        f(t) = sum (a_i x_i / (a_i^2 + t))^2 - 1, which is decreasing on
        (-min a^2, inf). Balls use the closed form.
        """
        xl = self._local(x)
        single = xl.ndim == 1
        xl = np.atleast_2d(xl)
        a = np.asarray(self.semi_axes)
        if self.is_ball:
            r = np.linalg.norm(xl, axis=1)
            if np.any(r == 0):
                raise ValueError("projection of the center is not unique")
            p = xl * (a[0] / r)[:, None]
        else:
            p = self._project_ellipsoid(xl, a, tol, max_iter)
        normal = p / a**2
        normal /= np.linalg.norm(normal, axis=1, keepdims=True)
        p = p + np.asarray(self.center)
        if single:
            return p[0], normal[0]
        return p, normal

    @staticmethod
    def _project_ellipsoid(xl, a, tol, max_iter):
        # multiplier shifted by the smallest a^2: s = t + a_min^2 > 0, so the
        # stopping rule is relative to the distance from the pole of f
        a2 = a * a
        amin = int(np.argmin(a2))
        shift = a2 - a2[amin]
        lo = np.zeros(xl.shape[0])
        hi = np.maximum(np.linalg.norm(a * xl, axis=1), 1.0) + a2[amin]
        s = 0.5 * hi
        for _ in range(max_iter):
            den = shift + s[:, None]
            q = a * xl / den
            f = np.sum(q * q, axis=1) - 1.0
            df = -2.0 * np.sum(q * q / den, axis=1)
            lo = np.where(f > 0, s, lo)
            hi = np.where(f <= 0, s, hi)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = s - f / df
            bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
            new = np.where(bad, 0.5 * (lo + hi), step)
            done = np.abs(new - s) <= tol * new
            s = new
            if np.all(done | (hi - lo <= 1e-300)):
                break
        with np.errstate(divide="ignore", invalid="ignore"):
            p = a2 * xl / (shift + s[:, None])
        # on the plane of the shortest axis f may have no root with s > 0;
        # the closest point then sits at s = 0 with that coordinate free
        near = s <= 1e-15 * a2[amin]
        if np.any(near):
            others = [k for k in range(3) if k != amin]
            for k in np.nonzero(near)[0]:
                pk = a2 * xl[k] / np.where(np.arange(3) == amin, 1.0, shift)
                r = sum((pk[j] / a[j]) ** 2 for j in others)
                pk[amin] = np.copysign(a[amin] * np.sqrt(max(1.0 - r, 0.0)), xl[k, amin])
                p[k] = pk
        return p

    def signed_distance(self, x):
        """Distance to the boundary, positive inside and negative outside."""
        xl = self._local(x)
        if self.is_ball:
            return self.semi_axes[0] - np.linalg.norm(xl, axis=-1)
        single = xl.ndim == 1
        xa = np.atleast_2d(xl)
        out = np.empty(xa.shape[0])
        at_center = np.all(xa == 0, axis=1)
        out[at_center] = min(self.semi_axes)
        if np.any(~at_center):
            p, _ = self.project_boundary(xa[~at_center] + np.asarray(self.center))
            dist = np.linalg.norm(xa[~at_center] + np.asarray(self.center) - p, axis=1)
            sign = np.where(self.level(xa[~at_center] + np.asarray(self.center)) <= 0, 1.0, -1.0)
            out[~at_center] = sign * dist
        return out[0] if single else out

    def boundary_point(self, direction):
        """Radial map from unit vectors to the boundary."""
        w = as_unit_vectors(direction)
        return np.asarray(self.center) + np.asarray(self.semi_axes) * w

    def sample_boundary(self, count):
        """Fibonacci-sphere points mapped radially onto the boundary."""
        pts = fibonacci_sphere(count)
        p = self.boundary_point(pts)
        return p, self.normal(p)

    def rigid_motion(self, p):
        """Motion sending boundary point p to 0 and its normal to -e1."""
        p = np.asarray(p, dtype=float)
        if abs(float(self.level(p))) > 1e-10:
            p, _ = self.project_boundary(p)
        return RigidMotion.from_normal(p, self.normal(p))


@dataclass(frozen=True)
class Slab:
    """Infinite slab |x_1 - center| < width/2.

    Only used as a one-dimensional validation geometry; it is neither
    bounded nor strictly convex.
    """

    width: float
    center: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.width) or self.width <= 0:
            raise ValueError("slab width must be positive")

    @property
    def faces(self):
        return self.center - 0.5 * self.width, self.center + 0.5 * self.width

    def signed_distance(self, x1):
        x1 = np.asarray(x1, dtype=float)
        return 0.5 * self.width - np.abs(x1 - self.center)


@dataclass(frozen=True)
class RigidMotion:
    """x -> rotation @ (x - origin)."""

    rotation: np.ndarray
    origin: np.ndarray

    @classmethod
    def from_normal(cls, origin, normal):
        n = np.asarray(normal, dtype=float)
        n = n / np.linalg.norm(n)
        # complete with the coordinate axis least aligned with n (lowest index on ties)
        k = int(np.argmin(np.abs(n)))
        e = np.zeros(3)
        e[k] = 1.0
        t1 = e - np.dot(e, n) * n
        t1 /= np.linalg.norm(t1)
        t2 = np.cross(t1, n)
        rot = np.vstack([-n, t1, t2])
        return cls(rot, np.asarray(origin, dtype=float))

    def __call__(self, x):
        return (as_points(x) - self.origin) @ self.rotation.T

    def inverse(self, y):
        return as_points(y) @ self.rotation + self.origin

    def rotate(self, v):
        return as_points(v) @ self.rotation.T


def fibonacci_sphere(count):
    """count nearly uniform unit vectors (golden-angle spiral)."""
    if count < 1:
        raise ValueError("count must be positive")
    k = np.arange(count) + 0.5
    z = 1.0 - 2.0 * k / count
    rho = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    phi = np.pi * (3.0 - np.sqrt(5.0)) * k
    return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])


def orthonormal_frame(axis):
    """Two unit tangents completing axis to a right-handed frame."""
    w = np.asarray(axis, dtype=float)
    w = w / np.linalg.norm(w)
    k = int(np.argmin(np.abs(w)))
    e = np.zeros(3)
    e[k] = 1.0
    t1 = e - np.dot(e, w) * w
    t1 /= np.linalg.norm(t1)
    return t1, np.cross(w, t1)
