"""Interior supersolutions Phi^eps and positivity harnesses.

Phi^eps dominates u^eps by the maximum principle; its defining inequality
L(Phi) >= |g|_1 e^{-c0 d / eps} is checked here numerically (report only).
"""

from dataclasses import asdict, dataclass, replace

import numpy as np

from ._validation import as_points, check_positive
from .absorption import AbsorptionField
from .milne import MilneOperator
from .specfun import tail_from
from .transport import domain_operator, picard_solve


def recipe_c1(domain):
    """2 max|x|^2 + 2 D^2 + 4 D + 4 over the closure of the domain."""
    c = np.asarray(domain.center, dtype=float)
    a = np.asarray(domain.semi_axes, dtype=float)
    # max |x|^2 on an ellipsoid, bounded by the enclosing box corner
    far = float(np.sum((np.abs(c) + a) ** 2)) if np.any(c != 0) else float(np.max(a) ** 2)
    D = domain.diameter
    return 2.0 * far + 2.0 * D * D + 4.0 * D + 4.0


def recipe_gamma(mu, c0=1.0, c1=1.0, safety=0.5):
    """gamma below nu_M / 2 (scaled by c0/c1 for variable alpha), M = 1/mu^2.

    nu_M is the kernel mass beyond depth M (c1 M for variable alpha).
    """
    M = 1.0 / mu**2
    nu = float(tail_from(c1 * M))
    return min(safety * nu * c0 / (2.0 * c1), 1.0 / 3.0 - 1e-12)


@dataclass(frozen=True)
class SupersolutionParams:
    """Constants of the interior supersolution.

    mu in (0, 1), gamma in (0, 1/3), C1, C2, C3 > 0, lam > 0 (variable
    alpha only), R the minimal curvature radius, c0 <= alpha <= c1.
    """

    mu: float
    gamma: float
    C1: float
    C2: float
    C3: float
    R: float
    c0: float = 1.0
    c1: float = 1.0
    lam: float = 1.0
    diameter: float = 2.0

    def __post_init__(self):
        if not 0 < self.mu < 1:
            raise ValueError("mu must lie in (0, 1)")
        if not 0 <= self.gamma < 1.0 / 3.0:
            raise ValueError("gamma must lie in [0, 1/3)")
        for name in ("C1", "C2", "C3", "R", "c0", "c1", "lam", "diameter"):
            check_positive(getattr(self, name), name)
        if self.c0 > self.c1:
            raise ValueError("need c0 <= c1")

    @classmethod
    def from_recipe(cls, domain, alpha=None, mu=0.5, C2=1.0, C3=0.5, lam=1.0):
        """Defaults from the explicit recipes: C1, then gamma from nu_M."""
        alpha = AbsorptionField.constant(1.0) if alpha is None else alpha
        c0, c1 = alpha.bounds(domain)
        return cls(mu=mu, gamma=recipe_gamma(mu, c0 / c1 if not alpha.is_constant else 1.0,
                                             1.0 if alpha.is_constant else c1 / c0),
                   C1=recipe_c1(domain), C2=C2, C3=C3, R=domain.min_curvature_radius,
                   c0=c0, c1=c1, lam=lam, diameter=domain.diameter)

    def eps_window(self, eps):
        """mu R / 2 > 2 eps ln(1/eps) / c0: the range where the bounds apply."""
        return self.mu * self.R / 2.0 > 2.0 * eps * np.log(1.0 / eps) / self.c0

    def uniform_bound(self, g_norm1, variant="constant"):
        """Upper bound on Phi^eps valid for every eps."""
        if variant == "constant":
            return g_norm1 * (2.0 * self.C3 * self.C1 + self.C2)
        return g_norm1 * self.C3 * (np.exp(self.lam * self.diameter) + self.C1 + self.C2)

    def as_dict(self):
        return asdict(self)


def _wedge(d, eps, gamma, mu, R, scale=1.0):
    near = 1.0 - gamma / (1.0 + (scale * d / eps) ** 2)
    cap = 1.0 - gamma / (1.0 + (scale * mu * R / eps) ** 2)
    return np.minimum(near, cap)


def phi_eps(x, params, eps, domain, g_norm1=1.0, variant="constant"):
    """Interior supersolution Phi^eps at points x (inside the domain).

    constant: |g|_1 [C3 (C1 - |x|^2) + C2 psi(d/eps)]
    variable: |g|_1 C3 [(e^{lam D} + C1 - e^{lam x_1}) + C2 psi(c0 d/eps)]
    with psi(s) = (1 - gamma/(1 + s^2)) min (1 - gamma/(1 + (mu R/eps)^2)).
    """
    x = as_points(x)
    d = np.maximum(domain.signed_distance(x), 0.0)
    p = params
    if variant == "constant":
        psi = _wedge(d, eps, p.gamma, p.mu, p.R)
        return g_norm1 * (p.C3 * (p.C1 - np.sum(x * x, axis=-1)) + p.C2 * psi)
    if variant == "variable":
        psi = _wedge(d, eps, p.gamma, p.mu, p.R, scale=p.c0)
        base = np.exp(p.lam * p.diameter) + p.C1 - np.exp(p.lam * x[..., 0])
        return g_norm1 * p.C3 * (base + p.C2 * psi)
    raise ValueError(f"unknown variant {variant!r}")


def check_supersolution(params, eps, domain, alpha, probes, g_norm1=1.0, variant="constant",
                        **quadrature):
    """Margins L(Phi^eps)(x) - |g|_1 e^{-c0 d(x)/eps} at the probes.

    The operator is applied by ray quadrature. Report only: margins of
    order the quadrature error near d ~ eps are possible. Returns a dict
    with per-probe distances and margins and the minimum margin.
    """
    alpha = AbsorptionField.constant(1.0) if alpha is None else alpha
    pts = np.atleast_2d(as_points(probes))

    def phi(y):
        return phi_eps(y, params, eps, domain, g_norm1, variant)

    L = domain_operator(phi, pts, domain, alpha, eps, **quadrature)
    d = domain.signed_distance(pts)
    target = g_norm1 * np.exp(-params.c0 * d / eps)
    margins = L - target
    return {
        "eps": float(eps),
        "variant": variant,
        "distance": d,
        "operator": L,
        "margin": margins,
        "min_margin": float(np.min(margins)),
        "in_window": bool(params.eps_window(eps)),
    }


def calibrate_supersolution(params, eps_list, domain, alpha, probes, g_norm1=1.0,
                            variant="constant", C2_grid=(1.0, 2.0, 4.0),
                            C3_grid=(0.5, 1.0, 2.0, 4.0, 8.0), lam_grid=None, **quadrature):
    """Smallest (C3, C2, lam) on the grid with nonnegative margins for every eps.

    The recipes fix mu, gamma and C1; the remaining constants are only
    known to exist. Candidates are tried in order of increasing uniform
    bound. Returns (params, reports); if no candidate passes, the one with
    the largest worst margin is returned.
    """
    lams = lam_grid if lam_grid is not None else ((params.lam,) if variant == "constant"
                                                   else (0.5, 1.0, 2.0))
    cands = [replace(params, C2=c2, C3=c3, lam=lm) for c3 in C3_grid for c2 in C2_grid
             for lm in lams]
    cands.sort(key=lambda p: p.uniform_bound(1.0, variant))
    best = None
    for cand in cands:
        reports = [check_supersolution(cand, e, domain, alpha, probes, g_norm1, variant,
                                       **quadrature) for e in eps_list]
        worst = min(r["min_margin"] for r in reports)
        if worst >= 0:
            return cand, reports
        if best is None or worst > best[0]:
            best = (worst, cand, reports)
    return best[1], best[2]


@dataclass
class HarnessReport:
    passed: bool
    trials: int
    min_value: float
    offending_source: np.ndarray = None

    def as_dict(self):
        return {"passed": self.passed, "trials": self.trials, "min_value": self.min_value}


def positivity_harness(operator, trials=100, seed=0, tol=1e-10, sign_flip=False,
                       picard_tol=1e-10):
    """Solve with seeded random nonnegative sources; every solution must be >= -tol.

    operator is a MilneOperator (direct solve) or a dense transport kernel
    matrix W (fixed-point sweeps of u = W u + S). With sign_flip the sources
    are negated, which must be detected as a failure.
    """
    rng = np.random.default_rng(seed)
    if isinstance(operator, MilneOperator):
        size = operator.grid.size

        def solve(s):
            return operator.solve(s)
    else:
        W = np.asarray(operator, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ValueError("transport operator must be a square kernel matrix")
        if np.any(W < 0):
            raise ValueError("kernel matrix has negative weights")
        size = W.shape[0]

        def solve(s):
            return picard_solve(W, s, tol=picard_tol)[0]

    worst = np.inf
    for _ in range(int(trials)):
        mask = rng.random(size) < rng.uniform(0.1, 1.0)
        src = rng.exponential(1.0, size) * mask
        if not np.any(src):
            src[rng.integers(size)] = 1.0
        if sign_flip:
            src = -src
        u = solve(src)
        scale = max(float(np.max(np.abs(u))), 1.0)
        low = float(np.min(u)) / scale
        worst = min(worst, low)
        if low < -tol:
            return HarnessReport(False, int(trials), worst, src)
    return HarnessReport(True, int(trials), worst)
