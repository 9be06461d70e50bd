"""Extension-problem solvers.

Inner Dirichlet problems are solved either by the method of fundamental
solutions (point sources on an outer auxiliary shell) or by an indirect
single-layer potential on an auxiliary shell. Analytic continuation,
the Cauchy problem and the "extension" treatment of the classical
Dirichlet problem are all reduced to an inner Dirichlet solve.

Sign conventions
----------------
Normals point out of each bounded domain. For Cauchy data
``(u00, u10)`` on ``dOmega0`` write ``G = W0(u00) + V0(u10)``. Green's
formula on the annulus ``Omega1 \\ closure(Omega0)`` gives
``u = F - G`` there, where ``F`` solves ``L F = 0`` in ``Omega1`` and
coincides with ``G`` inside ``Omega0``. Every reduction below computes a
Dirichlet datum for ``F`` and continues it.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .geometry import (INSIDE, DomainLayout, GeometryError, classify, source_sequence,
                       strictly_inside)
from .kernels import phi_matrix, to_blocks
from .potentials import (LayerDensity, boundary_limit, double_layer_values,
                         single_layer_self_trace_matrix, single_layer_values)
from .reglinalg import RegConfig, RegularizedSystem, SolveReport, assemble, solve

logger = logging.getLogger(__name__)

METHODS = ("mfs", "single-layer")
REDUCTIONS = ("probe", "pv", "hat")
DEFAULT_PROBE_SCALE = 0.6
EXCLUSION_BAND_FACTOR = 3.0
HAT_CONDITION_LIMIT = 1e12


class DomainError(ValueError):
    """Evaluation requested outside a solution's domain of validity."""


@dataclass(frozen=True, eq=False)
class ValidityDomain:
    """Where a solution may be evaluated.

    Points must lie strictly inside ``inside`` (or in its closure when
    ``closed``) and, when ``excluded`` is given, strictly outside it at a
    distance of at least ``band`` from its nodes.
    """

    inside: object
    closed: bool = False
    excluded: object = None
    band: float = 0.0

    def check(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.inside.ambient_dim:
            raise DomainError(f"points have dimension {points.shape[1]}, "
                              f"domain is {self.inside.ambient_dim}-dimensional")
        tags = classify(self.inside, points)
        ok = tags != "outside" if self.closed else tags == INSIDE
        if self.excluded is not None:
            ok &= classify(self.excluded, points) == "outside"
            if self.band > 0:
                d = np.linalg.norm(points[:, None, :] - self.excluded.nodes[None], axis=2).min(axis=1)
                ok &= d >= self.band
        if not np.all(ok):
            bad = np.flatnonzero(~ok)
            raise DomainError(f"{bad.size} evaluation point(s) outside the domain of validity "
                              f"(first: index {bad[0]}, {points[bad[0]].tolist()})")
        return points


@dataclass(frozen=True, eq=False)
class CauchyData:
    """Dirichlet and conormal traces of one solution on the same boundary."""

    boundary: object
    u00: LayerDensity
    u10: LayerDensity

    def __post_init__(self):
        if self.u00.boundary is not self.boundary or self.u10.boundary is not self.boundary:
            raise ValueError("both Cauchy densities must live on the Cauchy boundary")
        if self.u00.k != self.u10.k:
            raise ValueError("Cauchy densities have different component counts")

    def scaled(self, alpha):
        return CauchyData(self.boundary, alpha * self.u00, alpha * self.u10)

    def __add__(self, other):
        return CauchyData(self.boundary, self.u00 + other.u00, self.u10 + other.u10)


@dataclass(frozen=True, eq=False)
class ExtensionSolution:
    """A solved representation plus optional fixed additive terms.

    ``representation`` is ``"mfs"`` (``sources`` is an ``(N, d)`` array)
    or ``"layer-density"`` (``sources`` is a boundary; the coefficients are
    density values at its nodes). ``terms`` are callables added to the
    represented field; the Cauchy solver uses them for ``-G``.
    """

    op: object
    representation: str
    sources: object
    coefficients: np.ndarray
    report: SolveReport
    domain: ValidityDomain
    terms: tuple = ()
    flags: tuple = ()

    def __post_init__(self):
        n = len(self.sources) if self.representation == "mfs" else self.sources.n_nodes
        if self.representation not in ("mfs", "layer-density"):
            raise ValueError(f"unknown representation {self.representation!r}")
        if self.coefficients.size != n * self.op.k:
            raise ValueError(f"{self.coefficients.size} coefficients for {n} sources "
                             f"with {self.op.k} components")

    @property
    def flagged(self):
        return bool(self.flags)

    def represented(self, points):
        """The solved part only, without domain checks or extra terms."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        c = self.coefficients.reshape(-1, self.op.k)
        if self.representation == "mfs":
            out = np.empty((len(points), self.op.k))
            step = max(1, 2_000_000 // max(1, len(c) * self.op.k ** 2))
            for s in range(0, len(points), step):
                out[s:s + step] = (to_blocks(phi_matrix(self.op, points[s:s + step], self.sources))
                                   @ self.coefficients).reshape(-1, self.op.k)
            return out
        return single_layer_values(self.op, self.sources, c, points)

    def evaluate(self, points):
        """Field values, shape ``(M, k)``; raises DomainError off the domain."""
        points = self.domain.check(points)
        out = self.represented(points)
        for term in self.terms:
            out = out + term(points)
        return out


def _flags(*groups):
    return tuple(dict.fromkeys(f for g in groups for f in g))


def _check_data(f, boundary, k):
    if f.boundary is not boundary:
        raise ValueError("boundary data must be attached to the inner boundary of the layout")
    if f.k != k:
        raise ValueError(f"boundary data has {f.k} components, operator needs {k}")


def _regularized_solve(matrix, rhs, reg):
    return solve(RegularizedSystem(matrix, rhs, reg or RegConfig()))


# ---------------------------------------------------------------------------
# inner Dirichlet problem
# ---------------------------------------------------------------------------
def solve_inner_dirichlet_mfs(op, layout, f, N=None, reg=None, oversample=1, domain=None):
    """MFS with ``N`` nested sources on ``layout.outer``.

    Collocation targets are the nodes of ``layout.inner``; with
    ``oversample > 1`` every node is used and ``N`` defaults to
    ``n_nodes // oversample``.
    """
    op.require_solver_support()
    if layout.outer is None:
        raise GeometryError("MFS needs an outer source shell")
    inner = layout.inner
    _check_data(f, inner, op.k)
    N = int(N) if N is not None else max(1, inner.n_nodes // int(oversample))
    sources = source_sequence(layout.outer, N)
    matrix = assemble(op, sources, inner.nodes, mode="mfs")
    coef, report = _regularized_solve(matrix, f.values.reshape(-1), reg)
    logger.info("MFS solve: N=%d M=%d residual=%.3e cond=%.3e", N, inner.n_nodes,
                report.residual_norm, report.condition_estimate)
    domain = domain or ValidityDomain(layout.outer)
    return ExtensionSolution(op, "mfs", sources, coef, report, domain,
                             flags=_flags(f.flags, report.flags))


def solve_inner_dirichlet_single_layer(op, layout, f, reg=None, domain=None):
    """Indirect single-layer method with the density on ``layout.middle``."""
    op.require_solver_support()
    if layout.middle is None:
        raise GeometryError("the single-layer method needs a middle shell for the density")
    inner, support = layout.inner, layout.middle
    _check_data(f, inner, op.k)
    matrix = assemble(op, support, inner.nodes, mode="single-layer")
    coef, report = _regularized_solve(matrix, f.values.reshape(-1), reg)
    logger.info("single-layer solve: nodes=%d residual=%.3e cond=%.3e", support.n_nodes,
                report.residual_norm, report.condition_estimate)
    domain = domain or ValidityDomain(support)
    return ExtensionSolution(op, "layer-density", support, coef, report, domain,
                             flags=_flags(f.flags, report.flags))


def _solve_inner(op, layout, f, method, N, reg, domain=None):
    if method == "mfs":
        return solve_inner_dirichlet_mfs(op, layout, f, N, reg, domain=domain)
    if method == "single-layer":
        return solve_inner_dirichlet_single_layer(op, layout, f, reg, domain=domain)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def continue_solution(op, layout, V_trace, method="mfs", N=None, reg=None):
    """Continue a solution known inside ``layout.inner`` from its trace.

    The result is valid inside ``layout.middle`` when present, otherwise
    inside the source shell.
    """
    region = layout.middle if layout.middle is not None else layout.outer
    if region is None:
        raise GeometryError("continuation needs a middle or outer shell")
    domain = ValidityDomain(region)
    return _solve_inner(op, layout, V_trace, method, N, reg, domain)


def dirichlet_by_extension(op, inner, virtual, w0, method="mfs", N=None, reg=None):
    """Classical Dirichlet problem in ``inner`` via a virtual outer boundary."""
    if method == "mfs":
        layout = DomainLayout(inner, outer=virtual)
    else:
        layout = DomainLayout(inner, middle=virtual)
    return _solve_inner(op, layout, w0, method, N, reg, ValidityDomain(inner, closed=True))


# ---------------------------------------------------------------------------
# Cauchy problem
# ---------------------------------------------------------------------------
def _green_terms(op, data, points):
    return (double_layer_values(op, data.boundary, data.u00, points)
            + single_layer_values(op, data.boundary, data.u10, points))


def cauchy_datum_on_probe(op, data, probe):
    """``G`` on a probe boundary strictly inside the Cauchy boundary.

    For data of a solution defined across the Cauchy boundary this is that
    solution's trace on the probe.
    """
    if not np.all(strictly_inside(data.boundary, probe.nodes)):
        raise GeometryError("probe boundary must lie strictly inside the Cauchy boundary")
    return LayerDensity(probe, _green_terms(op, data, probe.nodes), 0.0,
                        _flags(data.u00.flags, data.u10.flags))


def cauchy_datum_pv(op, data, **kw):
    """Interior limit of ``G`` on the Cauchy boundary (offset extrapolation).

    Only smooth boundaries are accepted: the jump constant at corners is
    not available.
    """
    if data.boundary.kind == "triangulated":
        raise ValueError("the boundary-limit datum requires a smooth boundary")
    ref = float(max(np.abs(data.u00.values).max(initial=0.0), np.abs(data.u10.values).max(initial=0.0)))
    lim = boundary_limit(lambda p, n: _green_terms(op, data, p), data.boundary, INSIDE,
                         "boundary-limit datum", ref, **kw)
    return LayerDensity(lim.boundary, lim.values, lim.error_estimate,
                        _flags(data.u00.flags, data.u10.flags, lim.flags))


@dataclass(frozen=True, eq=False)
class HatDatum:
    """Datum on the Cauchy boundary plus the middle-shell density it removed."""

    datum: LayerDensity
    sigma: np.ndarray
    report: SolveReport


def _hat(op, layout, data, reg):
    if layout.middle is None:
        raise GeometryError("the hat reduction needs a middle shell")
    middle = layout.middle
    g = _green_terms(op, data, middle.nodes)
    S = single_layer_self_trace_matrix(op, middle)
    sigma, report = _regularized_solve(S, g.reshape(-1), reg)
    flags = list(report.flags)
    if report.condition_estimate > HAT_CONDITION_LIMIT:
        flags.append(f"hat: self-trace system ill-conditioned (cond={report.condition_estimate:.3e})")
    f0 = cauchy_datum_pv(op, data)
    dg = single_layer_values(op, middle, sigma.reshape(-1, op.k), data.boundary.nodes)
    datum = LayerDensity(data.boundary, f0.values - dg, f0.error_estimate, _flags(f0.flags, flags))
    return HatDatum(datum, sigma, report)


def cauchy_datum_hat(op, layout, data, reg=None):
    """Datum on the Cauchy boundary whose inner-Dirichlet solution has the
    trace of the Cauchy solution on ``layout.middle``.

    The middle-shell part is removed through the operator
    ``D = B0 V_middle (B0 V_middle|middle)^-1`` applied to ``G`` on the middle
    shell; the self-trace system is solved with regularisation.
    """
    return _hat(op, layout, data, reg).datum


def solve_cauchy(op, layout, data, reduction="probe", method="mfs", N=None, reg=None,
                 band_factor=EXCLUSION_BAND_FACTOR):
    """Reconstruct a solution in ``Omega1 \\ closure(Omega0)`` from Cauchy data.

    Stage a continues ``F`` from the reduction datum, stage b evaluates
    ``G``, stage c returns ``u = F - G``. Evaluation is limited to the open
    annulus minus a band of ``band_factor`` node spacings around the
    Cauchy boundary.
    """
    op.require_solver_support()
    if layout.inner is not data.boundary:
        raise ValueError("Cauchy data must live on the inner boundary of the layout")
    if layout.middle is None:
        raise GeometryError("the Cauchy problem needs a middle shell bounding the annulus")
    if reduction not in REDUCTIONS:
        raise ValueError(f"unknown reduction {reduction!r}; expected one of {REDUCTIONS}")
    # The representation for F must cover the whole annulus, so the single
    # layer sits on the outer shell when one is declared.
    support = layout.outer if layout.outer is not None else layout.middle
    if method == "mfs" and layout.outer is None:
        raise GeometryError("MFS needs an outer source shell")

    terms = []
    extra_flags = ()
    if reduction == "probe":
        probe = layout.interior_probe or layout.inner.scaled(DEFAULT_PROBE_SCALE)
        datum = cauchy_datum_on_probe(op, data, probe)
        start = probe
    elif reduction == "pv":
        datum = cauchy_datum_pv(op, data)
        start = layout.inner
    else:
        hat = _hat(op, layout, data, reg)
        datum = hat.datum
        start = layout.inner
        middle, sigma = layout.middle, hat.sigma.reshape(-1, op.k)
        terms.append(lambda p: single_layer_values(op, middle, sigma, p))
        extra_flags = hat.report.flags

    if method == "mfs":
        inner_layout = DomainLayout(start, outer=support)
    else:
        inner_layout = DomainLayout(start, middle=support)
    band = band_factor * float(np.max(layout.inner.spacing))
    domain = ValidityDomain(layout.middle, excluded=layout.inner, band=band)
    F = _solve_inner(op, inner_layout, datum, method, N, reg, domain)
    terms.append(lambda p: -_green_terms(op, data, p))
    return ExtensionSolution(op, F.representation, F.sources, F.coefficients, F.report, domain,
                             tuple(terms), _flags(F.flags, extra_flags))
