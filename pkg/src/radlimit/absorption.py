"""Absorption coefficient fields alpha(x) and optical depths along rays."""

import numpy as np

from ._validation import as_points, check_positive

TAU_CUT = 40.0  # optical depth beyond which e^{-tau} is treated as zero

_GL3_X, _GL3_W = np.polynomial.legendre.leggauss(3)


class AbsorptionField:
    """Positive smooth absorption coefficient.

    Kinds
    -----
    constant : alpha = value
    radial   : polynomial in r = |x - center|, coefficients low order first
    axial    : polynomial in x_1 - center[0] (slab geometries)
    grid     : quintic spline through values on a regular grid
    """

    def __init__(self, kind="constant", value=1.0, coefficients=None,
                 center=(0.0, 0.0, 0.0), grid_axes=None, grid_values=None):
        self.kind = kind
        self.center = np.asarray(center, dtype=float)
        if kind == "constant":
            self.value = check_positive(value, "alpha")
        elif kind in ("radial", "axial"):
            if coefficients is None or len(coefficients) == 0:
                raise ValueError(f"{kind} absorption needs polynomial coefficients")
            self.coefficients = np.asarray(coefficients, dtype=float)
            self._poly = np.polynomial.Polynomial(self.coefficients)
            self._dpoly = self._poly.deriv()
        elif kind == "grid":
            from scipy.interpolate import RegularGridInterpolator
            from scipy.sparse.linalg import spsolve

            axes = [np.asarray(a, dtype=float) for a in grid_axes]
            vals = np.asarray(grid_values, dtype=float)
            if len(axes) != 3 or vals.shape != tuple(len(a) for a in axes):
                raise ValueError("grid values must match the three axes")
            if min(len(a) for a in axes) < 6:
                raise ValueError("quintic grid interpolation needs >= 6 nodes per axis")
            if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
                raise ValueError("grid absorption values must be positive")
            self._lo = np.array([a[0] for a in axes])
            self._hi = np.array([a[-1] for a in axes])
            # direct solve: the default iterative spline fit stops near 1e-6
            self._interp = RegularGridInterpolator(axes, vals, method="quintic", solver=spsolve)
        else:
            raise ValueError(f"unknown absorption kind {kind!r}")

    @classmethod
    def constant(cls, value=1.0):
        return cls("constant", value=value)

    @classmethod
    def radial(cls, coefficients, center=(0.0, 0.0, 0.0)):
        return cls("radial", coefficients=coefficients, center=center)

    @classmethod
    def axial(cls, coefficients, center=0.0):
        return cls("axial", coefficients=coefficients, center=(center, 0.0, 0.0))

    @property
    def is_constant(self):
        return self.kind == "constant"

    def __repr__(self):
        if self.kind == "constant":
            return f"AbsorptionField.constant({self.value})"
        if self.kind in ("radial", "axial"):
            return f"AbsorptionField.{self.kind}({list(self.coefficients)})"
        return "AbsorptionField(kind='grid')"

    def profile(self, s):
        """alpha as a function of r (radial) or x_1 offset (axial)."""
        if self.kind == "constant":
            return np.full(np.shape(s), self.value)
        if self.kind not in ("radial", "axial"):
            raise ValueError("profile needs a radial or axial field")
        return self._poly(np.asarray(s, dtype=float))

    def __call__(self, x):
        x = as_points(x)
        if self.kind == "constant":
            return np.full(x.shape[:-1], self.value)
        if self.kind == "radial":
            return self._poly(np.linalg.norm(x - self.center, axis=-1))
        if self.kind == "axial":
            return self._poly(x[..., 0] - self.center[0])
        flat = np.clip(x.reshape(-1, 3), self._lo, self._hi)
        return self._interp(flat).reshape(x.shape[:-1])

    def gradient(self, x):
        x = as_points(x)
        if self.kind == "constant":
            return np.zeros_like(x)
        if self.kind == "radial":
            d = x - self.center
            r = np.linalg.norm(d, axis=-1, keepdims=True)
            with np.errstate(invalid="ignore", divide="ignore"):
                unit = np.where(r > 0, d / r, 0.0)
            return self._dpoly(r) * unit
        if self.kind == "axial":
            g = np.zeros_like(x)
            g[..., 0] = self._dpoly(x[..., 0] - self.center[0])
            return g
        h = 1e-5
        g = np.empty_like(x)
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            g[..., k] = (self(x + e) - self(x - e)) / (2 * h)
        return g

    def bounds(self, domain, samples=4096):
        """(c0, c1): min and max of alpha over the closure of the domain.

        Polynomial kinds are bounded through the extremes of the profile on
        the radial or axial range covered; grid fields by dense sampling.
        """
        if self.kind == "constant":
            return self.value, self.value
        if self.kind in ("radial", "axial"):
            lo, hi = self._profile_range(domain)
            s = np.linspace(lo, hi, samples)
            crit = [c.real for c in self._dpoly.roots()
                    if abs(c.imag) < 1e-12 and lo <= c.real <= hi] if self._dpoly.degree() > 0 else []
            vals = self._poly(np.concatenate([s, crit]))
        else:
            from .geometry import fibonacci_sphere

            n = int(round(samples ** (1.0 / 3.0)))
            dirs = fibonacci_sphere(max(n * n, 64))
            radii = np.linspace(0.0, 1.0, n + 1)
            pts = (radii[:, None, None] * dirs[None]).reshape(-1, 3)
            vals = self(np.asarray(domain.center) + pts * np.asarray(domain.semi_axes))
        c0, c1 = float(np.min(vals)), float(np.max(vals))
        if c0 <= 0:
            raise ValueError("absorption must be positive on the domain")
        return c0, c1

    def _profile_range(self, domain):
        from .geometry import Slab

        if isinstance(domain, Slab):
            a, b = domain.faces
            return a - self.center[0], b - self.center[0]
        c = np.asarray(domain.center)
        axes = np.asarray(domain.semi_axes)
        if self.kind == "radial":
            gap = float(np.linalg.norm(c - self.center))
            near = max(gap - float(np.max(axes)), 0.0)
            return near, gap + float(np.max(axes))
        return c[0] - axes[0] - self.center[0], c[0] + axes[0] - self.center[0]

    def optical_depth(self, x, n, length, eps, max_panel=None, tau_cut=TAU_CUT,
                      c0=None):
        """tau = (1/eps) * integral of alpha(x - t n) over t in [0, length].

        Gauss-Legendre (3 points) on panels no longer than max_panel
        (default eps/2). Integration stops once tau certainly exceeds
        tau_cut (given the lower bound c0); the returned depth is then
        only guaranteed to be >= tau_cut.
        """
        x = as_points(x)
        n = as_points(n)
        length = np.asarray(length, dtype=float)
        if self.kind == "constant":
            return self.value * length / eps
        if max_panel is None:
            max_panel = 0.5 * eps
        cap = length
        if c0 is not None:
            cap = np.minimum(length, tau_cut * eps / c0)
        shape = np.broadcast_shapes(x.shape[:-1], n.shape[:-1], cap.shape)
        x = np.broadcast_to(x, shape + (3,))
        n = np.broadcast_to(n, shape + (3,))
        cap = np.broadcast_to(cap, shape)
        npan = max(int(np.ceil(np.max(cap) / max_panel)) if cap.size else 1, 1)
        h = cap / npan  # per-ray panel length, <= max_panel
        edges = np.arange(npan)[:, None] + 0.5 * (_GL3_X[None, :] + 1.0)
        t = h[..., None, None] * edges  # (..., npan, 3)
        pts = x[..., None, None, :] - t[..., None] * n[..., None, None, :]
        vals = self(pts)
        tau = 0.5 * h * np.sum(vals * _GL3_W, axis=(-2, -1)) / eps
        return tau
