"""Run configuration, epsilon sweeps and the tables written by the CLI."""

import copy
import csv
import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .absorption import AbsorptionField
from .elliptic import LimitSolver, compare_fields
from .geometry import ConvexDomain, Slab
from .milne import BoundaryTemperatureMap, MilneSolver
from .sources import make_source, planar_source
from .specfun import (exp_integral_e1, first_moment_tail, head_from, kernel_fourier,
                      kernel_K)
from .transport import (CartesianMesh, SlabSolver, TransportSolver, boundary_layer_match,
                        flux_divergence_residual)
from .verify import SupersolutionParams, phi_eps

log = logging.getLogger(__name__)

EQUILIBRIUM_TOL = 1e-8

DEFAULT_CONFIG = {
    "domain": {"kind": "ball", "radius": 1.0, "center": [0.0, 0.0, 0.0]},
    "alpha": {"kind": "constant", "value": 1.0},
    "source": {"kind": "isotropic", "level": 1.0},
    "eps": [0.2, 0.1, 0.05, 0.025],
    "mesh": {"n": 16, "grading": 0.25, "interior_spacing": None, "mu_order": 6,
             "dtau": 0.1},
    "milne": {"y_max": 40.0, "h0": 1e-3, "h_max": 0.035, "growth": 1.1, "samples": 64},
    "tol": 1e-10,
    "max_iters": 500000,
    "margin": 0.3,
    "boundary_samples": 8,
    "probes": 16,
    "supersolution": {"mu": 0.5, "C2": 1.0, "C3": 0.5, "lam": 1.0},
    "seed": 0,
}

# keys that do not influence any computed number
_UNHASHED = ("output",)


# tagged specs replace the default wholesale instead of merging key by key
_REPLACED = ("domain", "alpha", "source")


def _merge(base, override):
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in _REPLACED:
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Validated run configuration (one JSON document)."""

    data: dict

    @classmethod
    def from_dict(cls, raw):
        unknown = set(raw) - set(DEFAULT_CONFIG) - set(_UNHASHED)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(_merge(DEFAULT_CONFIG, raw))
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path):
        with open(path, encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(raw)

    def validate(self):
        d = self.data
        eps = d["eps"]
        if not isinstance(eps, list) or not eps:
            raise ConfigError("eps must be a non-empty list")
        if any((not isinstance(e, (int, float))) or not np.isfinite(e) or e <= 0 for e in eps):
            raise ConfigError("eps values must be positive numbers")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError(f"eps list must be strictly decreasing, got {eps}")
        for key in ("tol", "max_iters", "boundary_samples", "probes"):
            if not d[key] > 0:
                raise ConfigError(f"{key} must be positive")
        if d["margin"] < 0:
            raise ConfigError("margin must be nonnegative")
        for key in ("n", "grading", "mu_order", "dtau"):
            if not d["mesh"][key] > 0:
                raise ConfigError(f"mesh.{key} must be positive")
        for key in ("y_max", "h0", "h_max", "growth", "samples"):
            if not d["milne"][key] > 0:
                raise ConfigError(f"milne.{key} must be positive")
        try:
            self.domain()
            self.alpha()
            self.source()
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid geometry, absorption or source spec: {exc}") from exc

    def __getitem__(self, key):
        return self.data[key]

    @property
    def hash(self):
        """sha256 of the canonical JSON of the hashed keys."""
        payload = {k: v for k, v in self.data.items() if k not in _UNHASHED}
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def domain(self):
        spec = self.data["domain"]
        kind = spec.get("kind")
        if kind == "ball":
            return ConvexDomain.ball(spec.get("radius", 1.0), spec.get("center", (0.0, 0.0, 0.0)))
        if kind == "ellipsoid":
            return ConvexDomain(tuple(spec["semi_axes"]), tuple(spec.get("center", (0.0, 0.0, 0.0))))
        if kind == "slab":
            return Slab(float(spec["width"]), float(spec.get("center", 0.0)))
        raise ValueError(f"unknown domain kind {kind!r}")

    def alpha(self):
        spec = self.data["alpha"]
        kind = spec.get("kind")
        if kind == "constant":
            return AbsorptionField.constant(spec.get("value", 1.0))
        if kind == "radial":
            return AbsorptionField.radial(spec["coefficients"], spec.get("center", (0.0, 0.0, 0.0)))
        if kind == "axial":
            return AbsorptionField.axial(spec["coefficients"], spec.get("center", 0.0))
        raise ValueError(f"unknown absorption kind {kind!r}")

    def source(self):
        return make_source(self.data["source"])

    def milne_params(self):
        m = self.data["milne"]
        return {k: m[k] for k in ("y_max", "h0", "h_max", "growth")}

    def transport_solver(self, eps):
        m = self.data["mesh"]
        return TransportSolver(eps=eps, boundary_spacing=m["grading"],
                               interior_spacing=m["interior_spacing"], mu_order=m["mu_order"],
                               dtau=m["dtau"], n_cells=m["n"], tol=self.data["tol"],
                               max_iter=self.data["max_iters"])


# --------------------------------------------------------------------------
# output helpers


def fmt(x):
    """Shortest round-trip text for a float (bitwise reproducible)."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    return repr(float(x))


def write_csv(path, header, rows):
    """CSV with a header row of 'name [unit]' entries."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


def write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


# --------------------------------------------------------------------------
# kernel table


def run_kernel_table(start=0.25, stop=10.0, step=0.25):
    """Rows (x, K, E1, head, tail, first_moment_tail, fourier) on a grid.

    head(x) is the kernel mass below x, tail(x) the mass above it and the
    first-moment column is the integral of s K(s) over s > x. The Fourier
    column is the kernel's transform evaluated at xi = x.
    """
    count = int(round((stop - start) / step))
    if count < 0 or not np.isclose(start + count * step, stop, rtol=0, atol=1e-9 * abs(step)):
        raise ValueError("stop - start must be a nonnegative multiple of step")
    xs = start + step * np.arange(count + 1)
    if np.any(np.abs(xs) < 1e-12 * max(abs(step), 1.0)):
        raise ValueError("kernel table grid contains x = 0, where K is singular")
    ax = np.abs(xs)
    tail = head_from(xs)
    head = head_from(-xs)
    rows = np.column_stack([xs, kernel_K(xs), exp_integral_e1(ax), head, tail,
                            first_moment_tail(ax), kernel_fourier(xs)])
    return rows


KERNEL_TABLE_HEADER = ["x [1]", "K [1]", "E1 [1]", "head [1]", "tail [1]",
                       "first_moment_tail [1]", "fourier [1]"]


# --------------------------------------------------------------------------
# convergence study


@dataclass
class StudyReport:
    """Per-eps records (descending eps) plus the config echo and checks."""

    config: dict
    config_hash: str
    records: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c["passed"] for c in self.checks.values())

    RECORD_COLUMNS = [
        ("eps", "1"), ("sup_error", "u"), ("l2_error", "u*L^1.5"), ("iterations", "1"),
        ("contraction", "1"), ("boundary_match", "u"), ("residual", "u"),
        ("flux_residual", "1"), ("phi_gap_min", "u"), ("phi_max", "u"), ("nodes", "1"),
    ]

    def csv_rows(self):
        return [[r.get(name) if r.get("error") is None else None for name, _ in self.RECORD_COLUMNS]
                + [self.config_hash] for r in self.records]

    def csv_header(self):
        return [f"{n} [{u}]" for n, u in self.RECORD_COLUMNS] + ["config_hash [-]"]

    def as_dict(self):
        return {"config": self.config, "config_hash": self.config_hash,
                "records": [dict(r, config_hash=self.config_hash) for r in self.records],
                "checks": self.checks, "passed": self.passed}

    def write(self, out_dir, prefix="study"):
        os.makedirs(out_dir, exist_ok=True)
        write_csv(os.path.join(out_dir, f"{prefix}.csv"), self.csv_header(), self.csv_rows())
        write_json(os.path.join(out_dir, f"{prefix}.json"), self.as_dict())
        write_json(os.path.join(out_dir, "timings.json"),
                   {"config_hash": self.config_hash, "seconds": self.timings})


def _strictly_decreasing(values):
    v = np.asarray(values, dtype=float)
    return bool(v.size >= 2 and np.all(np.isfinite(v)) and np.all(np.diff(v) < 0))


def _limit_data(cfg, domain, source, alpha):
    """Boundary data of the limit problem: a fitted map or slab face values."""
    mp = cfg.milne_params()
    if isinstance(domain, Slab):
        faces = {}
        for side, nrm in (("left", (-1.0, 0.0, 0.0)), ("right", (1.0, 0.0, 0.0))):
            n = np.asarray(nrm)
            solver = MilneSolver(**mp).fit(lambda y, n=n: planar_source(source, n, y))
            faces[side] = solver
        return faces
    samples = cfg["milne"]["samples"]
    if domain.is_ball and source.is_isotropic():
        samples = 1  # every boundary point sees the same layer problem
    bmap = BoundaryTemperatureMap(samples=int(samples), **mp).fit(domain, source, alpha)
    return bmap


def _match_profiles(cfg, domain, source, alpha, limit):
    """(points, normals, profile_at) for the boundary-layer comparison."""
    if isinstance(domain, Slab):
        a, b = domain.faces
        pts = np.array([[a, 0.0, 0.0], [b, 0.0, 0.0]])
        nrm = np.array([[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        profs = [limit["left"].profile_, limit["right"].profile_]
        return pts, nrm, profs.__getitem__
    mp = cfg.milne_params()
    k = int(cfg["boundary_samples"])
    bm = BoundaryTemperatureMap(samples=k, **mp).fit(domain, source, alpha)
    return bm.points_, bm.normals_, bm.profiles_.__getitem__


def run_convergence_study(config, probes_seed=None):
    """eps sweep: transport solve, limit comparison, layer match, supersolution.

    Per-eps failures are recorded and the sweep continues.
    """
    cfg = config if isinstance(config, RunConfig) else RunConfig.from_dict(config)
    domain, alpha, source = cfg.domain(), cfg.alpha(), cfg.source()
    report = StudyReport(cfg.data, cfg.hash)
    t0 = time.perf_counter()
    limit = _limit_data(cfg, domain, source, alpha)
    report.timings["limit_boundary_data"] = time.perf_counter() - t0
    pts, nrm, profile_at = _match_profiles(cfg, domain, source, alpha, limit)
    seed = cfg["seed"] if probes_seed is None else probes_seed
    g1 = source.norm1
    sup_params = None
    variant = "constant" if alpha.is_constant else "variable"
    if isinstance(domain, ConvexDomain):
        sp = cfg["supersolution"]
        sup_params = SupersolutionParams.from_recipe(domain, alpha, mu=sp["mu"], C2=sp["C2"],
                                                     C3=sp["C3"], lam=sp["lam"])
    cart_limit = None
    for eps in cfg["eps"]:
        rec = {"eps": float(eps), "error": None}
        t1 = time.perf_counter()
        try:
            if isinstance(domain, Slab):
                solver = SlabSolver(eps=eps, h0=cfg["milne"]["h0"]).fit(domain, source, alpha)
                u = solver.field_
                v = LimitSolver().fit(u.mesh, (limit["left"].u_inf_, limit["right"].u_inf_),
                                      alpha).field_
            else:
                solver = cfg.transport_solver(eps).fit(domain, source, alpha)
                u = solver.field_
                if isinstance(u.mesh, CartesianMesh):
                    if cart_limit is None:
                        cart_limit = LimitSolver().fit(u.mesh, limit, alpha).field_
                    v = cart_limit
                else:
                    v = LimitSolver().fit(u.mesh, limit, alpha).field_
            sup, l2 = compare_fields(u, v, cfg["margin"])
            match = boundary_layer_match(u, profile_at, alpha, pts, nrm)
            rec.update(sup_error=sup, l2_error=l2, iterations=int(u.iterations),
                       contraction=float(u.contraction), boundary_match=float(np.max(match)),
                       boundary_match_samples=[float(m) for m in match],
                       residual=float(u.residual), nodes=int(u.mesh.size))
            if u.rule is not None:
                rng = np.random.default_rng(seed)
                interior = np.nonzero(u.mesh.distance > 0)[0]
                pick = np.sort(rng.choice(interior, min(int(cfg["probes"]), interior.size),
                                          replace=False))
                fr = flux_divergence_residual(u, source, alpha, u.mesh.points[pick])
                rec["flux_residual"] = float(np.max(fr))
            else:
                rec["flux_residual"] = None
            if sup_params is not None:
                phi = phi_eps(u.mesh.points, sup_params, eps, domain, g1, variant)
                rec["phi_gap_min"] = float(np.min(phi - u.values))
                rec["phi_max"] = float(np.max(phi))
            else:
                rec["phi_gap_min"] = None
                rec["phi_max"] = None
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            log.warning("eps=%s failed: %s", eps, exc)
            rec["error"] = f"{type(exc).__name__}: {exc}"
        report.timings[f"eps={eps!r}"] = time.perf_counter() - t1
        report.records.append(rec)
        log.info("eps=%s sup=%s match=%s", eps, rec.get("sup_error"), rec.get("boundary_match"))
    report.checks = study_checks(report, sup_params, g1, variant)
    return report


def study_checks(report, sup_params=None, g1=1.0, variant="constant"):
    """Acceptance-tagged checks over a finished sweep."""
    recs = report.records
    ok = [r for r in recs if r.get("error") is None]
    checks = {"all_solved": {"passed": len(ok) == len(recs),
                             "failures": [r["eps"] for r in recs if r.get("error")]}}
    if not ok:
        return checks
    sup = [r["sup_error"] for r in ok]
    match = [r["boundary_match"] for r in ok]
    equilibrium = max(sup) <= EQUILIBRIUM_TOL and max(match) <= EQUILIBRIUM_TOL
    checks["sup_error_decreasing"] = {
        "passed": bool(equilibrium or _strictly_decreasing(sup)),
        "equilibrium": bool(equilibrium), "values": sup}
    checks["boundary_match_decreasing"] = {
        "passed": bool(equilibrium or _strictly_decreasing(match)),
        "equilibrium": bool(equilibrium), "values": match}
    fr = [r["flux_residual"] for r in ok if r.get("flux_residual") is not None]
    if fr:
        tol = report.config["tol"]
        checks["flux_balance"] = {"passed": bool(max(fr) <= 10 * tol), "max": max(fr),
                                  "threshold": 10 * tol}
    gaps = [r["phi_gap_min"] for r in ok if r.get("phi_gap_min") is not None]
    if gaps and sup_params is not None:
        bound = sup_params.uniform_bound(g1, variant)
        phis = [r["phi_max"] for r in ok]
        checks["supersolution_domination"] = {
            "passed": bool(min(gaps) >= 0 and max(phis) <= bound),
            "min_gap": min(gaps), "max_phi": max(phis), "uniform_bound": bound}
    return checks
