"""Running configured experiments and studies, and writing their CSV output."""

import csv
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .geometry import DomainLayout, build_boundary
from .kernels import (KINDS, OperatorSpec, apply_conormal, conormal_kernel_x, phi,
                      pde_residual)
from .manufactured import manufactured_solution
from .potentials import LayerDensity
from .problems import (CauchyData, DomainError, continue_solution, dirichlet_by_extension, solve_cauchy,
                       solve_inner_dirichlet_mfs, solve_inner_dirichlet_single_layer)

logger = logging.getLogger(__name__)

THREADS_ENV = "EXT_SOLVER_THREADS"

REPORT_COLUMNS = (
    "study", "point", "operator", "problem", "method", "reduction",
    "n_sources", "n_nodes", "inner_radius", "middle_radius", "outer_radius",
    "alpha", "delta", "seed",
    "residual_norm", "solution_norm", "condition_estimate", "effective_rank", "alpha_used",
    "field_error", "probe_errors", "flags",
)
FIELD_COLUMNS_2D = ("x", "y", "component", "value")
FIELD_COLUMNS_3D = ("x", "y", "z", "component", "value")


def fmt(value):
    """CSV cell: floats in scientific notation with 16 significant digits."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.15e}"
    return str(value)


def thread_cap():
    """Worker count from ``EXT_SOLVER_THREADS`` (default: CPU count)."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


# ---------------------------------------------------------------------------
# a single study point
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class StudyPoint:
    """Overrides applied to the base config for one row."""

    n_sources: object = None
    n_nodes: object = None
    noise: object = None
    source_radius: object = None


@dataclass
class PointResult:
    row: dict
    field_rows: list
    wall_time: float
    flagged: bool


def _mean_radius(b):
    if b is None or b.kind == "triangulated":
        return None
    return float(np.mean(b.radii))


def _source_role(cfg):
    if cfg.method == "mfs":
        return "outer"
    return "middle" if "middle" in cfg.shells else "outer"


def _build_shells(cfg, point):
    specs = {role: dict(spec) for role, spec in cfg.shells.items()}
    probe_specs = {name: dict(spec) for name, spec in cfg.probes.items()}
    if point.n_nodes is not None:
        for spec in list(specs.values()) + list(probe_specs.values()):
            if spec["kind"] != "triangulated":
                spec["n_nodes"] = point.n_nodes
    if point.source_radius is not None:
        spec = specs.get(_source_role(cfg))
        if spec is None or spec["kind"] == "triangulated":
            raise ValueError("source_radii sweep needs a parametric source shell")
        radii = np.asarray(spec["radii"], dtype=float)
        spec["radii"] = tuple(radii * point.source_radius / radii[0])
    shells = {role: build_boundary(spec) for role, spec in specs.items()}
    probes = {name: build_boundary(spec) for name, spec in probe_specs.items()}
    return shells, probes


def _default_probes(cfg, shells):
    inner = shells["inner"]
    if cfg.problem == "dirichlet-extension":
        return {"mid": inner.scaled(0.5)}
    if cfg.problem == "cauchy":
        region = shells["middle"]
    elif cfg.method == "single-layer" or (cfg.problem == "continuation" and "middle" in shells):
        region = shells["middle"]
    else:
        region = shells["outer"]
    r_in, r_out = _mean_radius(inner), _mean_radius(region)
    if r_in is None or r_out is None:
        factor = 0.5 * (1.0 + region.diameter / inner.diameter)
    else:
        factor = 0.5 * (1.0 + r_out / r_in)
    return {"mid": inner.scaled(factor)}


class _ZeroSolution:
    def __init__(self, op):
        self.op = op

    def field(self, x):
        return np.zeros((len(np.atleast_2d(x)), self.op.k))

    def dirichlet(self, b):
        return LayerDensity(b, np.zeros((b.n_nodes, self.op.k)))

    def cauchy_data(self, b):
        return CauchyData(b, self.dirichlet(b), self.dirichlet(b))


def _boundary_data(cfg, inner):
    """Exact solution (or None) and the Cauchy/Dirichlet data on ``inner``."""
    op = cfg.operator
    if cfg.data_source == "file":
        table = np.loadtxt(cfg.data_file, ndmin=2)
        need = 2 * op.k if cfg.problem == "cauchy" else op.k
        if table.shape != (inner.n_nodes, need):
            raise ValueError(f"{cfg.data_file}: expected {inner.n_nodes} rows of {need} values, "
                             f"got shape {table.shape}")
        u00 = LayerDensity(inner, table[:, :op.k])
        if cfg.problem == "cauchy":
            return None, CauchyData(inner, u00, LayerDensity(inner, table[:, op.k:]))
        return None, u00
    exact = (_ZeroSolution(op) if cfg.data_source == "zero"
             else manufactured_solution(op, cfg.z0, cfg.column, cfg.amplitude))
    data = exact.cauchy_data(inner) if cfg.problem == "cauchy" else exact.dirichlet(inner)
    return exact, data


def add_noise(values, delta, seed):
    """Gaussian perturbation with relative L2 size exactly ``delta``.

    Returns the perturbed array and the achieved relative perturbation.
    """
    values = np.asarray(values, dtype=float)
    norm = np.linalg.norm(values)
    if delta == 0 or norm == 0:
        return values.copy(), 0.0
    e = np.random.default_rng(seed).standard_normal(values.shape)
    noisy = values + (delta * norm / np.linalg.norm(e)) * e
    return noisy, float(np.linalg.norm(noisy - values) / norm)


def _perturb(cfg, data, delta):
    if isinstance(data, CauchyData):
        vals, achieved = add_noise(data.u00.values, delta, cfg.seed)
        return CauchyData(data.boundary, LayerDensity(data.boundary, vals), data.u10), achieved
    vals, achieved = add_noise(data.values, delta, cfg.seed)
    return LayerDensity(data.boundary, vals), achieved


def _solve(cfg, shells, data, n_sources):
    op, reg = cfg.operator, cfg.reg
    inner = shells["inner"]
    if cfg.problem == "dirichlet-extension":
        virtual = shells["outer"] if cfg.method == "mfs" else shells.get("middle", shells.get("outer"))
        return dirichlet_by_extension(op, inner, virtual, data, cfg.method, n_sources, reg)
    layout = DomainLayout(inner, shells.get("middle"), shells.get("outer"), shells.get("probe"))
    if cfg.problem == "cauchy":
        return solve_cauchy(op, layout, data, cfg.reduction, cfg.method, n_sources, reg)
    if cfg.problem == "continuation":
        return continue_solution(op, layout, data, cfg.method, n_sources, reg)
    if cfg.method == "mfs":
        return solve_inner_dirichlet_mfs(op, layout, data, n_sources, reg, cfg.oversample)
    return solve_inner_dirichlet_single_layer(op, layout, data, reg)


def _relative_error(u, exact):
    num = np.linalg.norm(u - exact)
    den = np.linalg.norm(exact)
    return float(num / den) if den > 0 else float(num)


def run_point(cfg, study, index, point):
    """Solve one configured problem and compute its report row and field rows."""
    start = time.perf_counter()
    shells, probes = _build_shells(cfg, point)
    probes = probes or _default_probes(cfg, shells)
    exact, data = _boundary_data(cfg, shells["inner"])
    delta = cfg.noise if point.noise is None else point.noise
    data, achieved = _perturb(cfg, data, delta)
    n_sources = cfg.n_sources if point.n_sources is None else point.n_sources
    sol = _solve(cfg, shells, data, n_sources)

    errors, field_rows, all_u, all_exact = {}, [], [], []
    flags = list(sol.flags)
    for name, probe in probes.items():
        try:
            u = sol.evaluate(probe.nodes)
        except DomainError as exc:
            flags.append(f"probe {name} skipped: {exc}")
            continue
        for x, vals in zip(probe.nodes, u):
            for c, v in enumerate(vals):
                field_rows.append([fmt(float(t)) for t in x] + [str(c), fmt(float(v))])
        if exact is not None:
            ex = exact.field(probe.nodes)
            errors[name] = _relative_error(u, ex)
            all_u.append(u)
            all_exact.append(ex)
    field_error = (_relative_error(np.concatenate(all_u), np.concatenate(all_exact))
                   if exact is not None and all_u else None)

    rep = sol.report
    n_src = len(sol.sources) if sol.representation == "mfs" else sol.sources.n_nodes
    row = {
        "study": study, "point": index, "operator": cfg.operator.kind, "problem": cfg.problem,
        "method": cfg.method, "reduction": cfg.reduction if cfg.problem == "cauchy" else "",
        "n_sources": n_src, "n_nodes": shells["inner"].n_nodes,
        "inner_radius": _mean_radius(shells["inner"]),
        "middle_radius": _mean_radius(shells.get("middle")),
        "outer_radius": _mean_radius(shells.get("outer")),
        "alpha": cfg.reg.alpha, "delta": achieved, "seed": cfg.seed,
        "residual_norm": rep.residual_norm, "solution_norm": rep.solution_norm,
        "condition_estimate": rep.condition_estimate, "effective_rank": rep.effective_rank,
        "alpha_used": rep.alpha_used, "field_error": field_error,
        "probe_errors": ";".join(f"{k}:{fmt(v)}" for k, v in errors.items()),
        "flags": ";".join(flags),
    }
    return PointResult({k: fmt(v) for k, v in row.items()}, field_rows,
                       time.perf_counter() - start, bool(flags))


# ---------------------------------------------------------------------------
# studies
# ---------------------------------------------------------------------------
def study_points(cfg, study):
    """Study points in declaration order."""
    s = cfg.study
    if study == "solve":
        return [StudyPoint()]
    if study == "study-convergence":
        n_src, n_nodes = s.get("n_sources"), s.get("n_nodes")
        if n_src is None and n_nodes is None:
            raise ValueError("study-convergence needs [study] n_sources or n_nodes")
        length = len(n_src or n_nodes)
        return [StudyPoint(n_sources=n_src[i] if n_src else None,
                           n_nodes=n_nodes[i] if n_nodes else None) for i in range(length)]
    if study == "study-noise":
        if "noise" not in s:
            raise ValueError("study-noise needs [study] noise")
        return [StudyPoint(noise=d) for d in s["noise"]]
    if study == "study-conditioning":
        if "source_radii" not in s:
            raise ValueError("study-conditioning needs [study] source_radii")
        return [StudyPoint(source_radius=r) for r in s["source_radii"]]
    raise ValueError(f"unknown study {study!r}")


def run_study(cfg, study, threads=None):
    """Run all points of ``study``; results come back in declaration order.

    BLAS is pinned to one thread inside the run so results do not depend
    on the worker count.
    """
    points = study_points(cfg, study)
    workers = max(1, min(threads or thread_cap(), len(points)))
    with threadpool_limits(limits=1):
        if workers == 1:
            return [run_point(cfg, study, i, p) for i, p in enumerate(points)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda ip: run_point(cfg, study, *ip), enumerate(points)))


def write_outputs(cfg, results, out_dir):
    """Write ``report.csv``, ``field.csv`` (last study point) and ``timing.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in results:
            w.writerow([r.row[c] for c in REPORT_COLUMNS])
    with open(out / "field.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIELD_COLUMNS_2D if cfg.operator.dim == 2 else FIELD_COLUMNS_3D)
        w.writerows(results[-1].field_rows)
    with open(out / "timing.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("point", "wall_time"))
        for i, r in enumerate(results):
            w.writerow((i, f"{r.wall_time:.6e}"))


# ---------------------------------------------------------------------------
# kernel checks
# ---------------------------------------------------------------------------
def check_kernel(op, seed=0, n_points=20, h=1e-3):
    """Kernel invariant checks; returns ``(passed, {check: value})``.

    Checks the finite-difference PDE residual, the symmetry
    ``Phi(x, y) = Phi(y, x)^T``, and the closed-form conormal derivative
    against a finite-difference gradient.
    """
    rng = np.random.default_rng(seed)
    d = op.dim
    ys = rng.uniform(-1, 1, (n_points, d))
    dirs = rng.standard_normal((n_points, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    xs = ys + rng.uniform(0.5, 2.0, (n_points, 1)) * dirs
    pde = max(pde_residual(op, y, x, h) for x, y in zip(xs, ys))
    sym = max(float(np.abs(phi(op, x, y) - phi(op, y, x).T).max() / np.abs(phi(op, x, y)).max())
              for x, y in zip(xs, ys))
    con = 0.0
    for x, y, n in zip(xs, ys, dirs[::-1]):
        grad = np.stack([(phi(op, x + h * e, y) - phi(op, x - h * e, y)) / (2 * h)
                         for e in np.eye(d)], axis=-1)
        fd = apply_conormal(op, grad, n)
        exact = conormal_kernel_x(op, x, n, y)
        con = max(con, float(np.abs(fd - exact).max() / np.abs(exact).max()))
    values = {"pde_residual": pde, "symmetry": sym, "conormal": con}
    passed = pde < 1e-4 and sym < 1e-12 and con < 1e-4
    return passed, values


def default_operators():
    return [OperatorSpec(kind) for kind in KINDS]


__all__ = ["REPORT_COLUMNS", "StudyPoint", "add_noise", "check_kernel", "run_point",
           "run_study", "study_points", "write_outputs", "thread_cap"]
