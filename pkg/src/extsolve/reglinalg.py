"""Dense collocation systems and their regularised SVD solution."""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .kernels import SingularityError, phi_matrix, to_blocks

logger = logging.getLogger(__name__)

DEFAULT_RELATIVE_ALPHA = 1e-24


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class RegConfig:
    """Regularisation settings.

    ``alpha`` is the Tikhonov parameter; ``None`` means
    ``(1e-12 * sigma_max)**2``. ``tau`` is the relative TSVD cut-off.
    With ``selection="discrepancy"`` alpha is chosen so that the residual
    equals ``delta * ||b||``.
    """

    method: str = "tikhonov"
    alpha: Optional[float] = None
    tau: float = 1e-12
    selection: str = "fixed"
    delta: Optional[float] = None

    def __post_init__(self):
        if self.method not in ("tikhonov", "tsvd"):
            raise ValueError(f"unknown regularisation method {self.method!r}")
        if self.alpha is not None and not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not 0 < self.tau < 1:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        if self.selection not in ("fixed", "discrepancy"):
            raise ValueError(f"unknown alpha selection {self.selection!r}")
        if self.selection == "discrepancy" and not (self.delta is not None and self.delta > 0):
            raise ValueError("discrepancy selection needs a positive delta")


@dataclass
class SolveReport:
    residual_norm: float
    solution_norm: float
    condition_estimate: float
    effective_rank: int
    alpha_used: float
    flags: tuple = ()


@dataclass
class RegularizedSystem:
    """``matrix @ x ~ rhs`` with a regularisation config; ``report`` is set by :func:`solve`."""

    matrix: np.ndarray
    rhs: np.ndarray
    reg: RegConfig = field(default_factory=RegConfig)
    report: Optional[SolveReport] = None
    _svd: Optional[tuple] = field(default=None, repr=False)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        self.rhs = np.asarray(self.rhs, dtype=float).reshape(-1)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.rhs.size:
            raise ValueError(f"matrix {self.matrix.shape} incompatible with rhs of size {self.rhs.size}")
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("matrix has non-finite entries")

    def svd(self):
        if self._svd is None:
            self._svd = np.linalg.svd(self.matrix, full_matrices=False)
        return self._svd


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------
def assemble(op, sources, targets, mode="mfs"):
    """Collocation matrix with ``k x k`` blocks.

    ``mode="mfs"``: ``sources`` is an ``(N, d)`` point array, blocks are
    ``Phi(x_i, z_j)``. ``mode="single-layer"``: ``sources`` is a boundary,
    blocks are ``w_q Phi(x_i, y_q)``. Row blocks follow ``targets``.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if mode == "mfs":
        pts = np.atleast_2d(np.asarray(sources, dtype=float))
        weights = None
    elif mode == "single-layer":
        pts, weights = sources.nodes, sources.weights
    else:
        raise ValueError(f"unknown assembly mode {mode!r}")
    try:
        mat = to_blocks(phi_matrix(op, targets, pts))
    except SingularityError as exc:
        i, j = exc.indices[:2]
        raise AssemblyError(f"target {i} coincides with source {j}") from exc
    if weights is not None:
        mat = mat * np.repeat(weights, op.k)[None, :]
    return mat


# ---------------------------------------------------------------------------
# solving
# ---------------------------------------------------------------------------
def _filter(s, method, alpha, tau):
    if method == "tikhonov":
        return s / (s * s + alpha) if alpha > 0 else np.where(s > 0, 1.0 / np.where(s > 0, s, 1.0), 0.0)
    keep = s >= tau * s[0]
    return np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)


def _residual_norm(u, s, beta, b, alpha):
    """Tikhonov residual from the SVD, including the part of b outside range(U)."""
    out_of_range = max(float(b @ b - beta @ beta), 0.0)
    inside = (alpha / (s * s + alpha)) * beta
    return float(np.sqrt(inside @ inside + out_of_range))


def condition_estimate(matrix):
    """``sigma_max / sigma_min`` from a full SVD."""
    s = np.linalg.svd(np.asarray(matrix, dtype=float), compute_uv=False)
    if s[0] == 0:
        raise ValueError("condition number of a zero matrix is undefined")
    return float(s[0] / s[-1]) if s[-1] > 0 else float("inf")


def pick_alpha_discrepancy(sys, delta, rtol=0.01, max_iter=200):
    """Tikhonov alpha with ``||A x_alpha - b|| = delta * ||b||`` (Morozov).

    Bisection on ``log(alpha)``; the residual is nondecreasing in alpha.
    Returns ``(alpha, flags)``. When even the smallest grid alpha leaves a
    residual above the target, that alpha is returned with a flag.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    u, s, _ = sys.svd()
    b = sys.rhs
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0:
        return float(s[0] ** 2), ()
    beta = u.T @ b
    target = delta * bnorm
    lo, hi = np.log((s[0] * 1e-16) ** 2 + 1e-300), np.log(s[0] ** 2 * 1e12)

    def res(log_alpha):
        return _residual_norm(u, s, beta, b, np.exp(log_alpha))

    if res(lo) > target:
        logger.warning("discrepancy target %.3e below attainable residual; using smallest alpha", target)
        return float(np.exp(lo)), ("discrepancy: target residual not attainable, smallest alpha used",)
    if res(hi) < target:
        return float(np.exp(hi)), ()
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        r = res(mid)
        if abs(r / target - 1.0) < rtol:
            return float(np.exp(mid)), ()
        if r > target:
            hi = mid
        else:
            lo = mid
    return float(np.exp(0.5 * (lo + hi))), ()


def solve(sys):
    """Regularised least-squares solve; returns ``(x, report)`` and stores the report."""
    u, s, vt = sys.svd()
    if s[0] == 0:
        raise ValueError("cannot solve a system with an all-zero matrix")
    reg = sys.reg
    flags = []
    alpha = reg.alpha if reg.alpha is not None else DEFAULT_RELATIVE_ALPHA * s[0] ** 2
    if reg.selection == "discrepancy":
        alpha, dflags = pick_alpha_discrepancy(sys, reg.delta)
        flags.extend(dflags)
    beta = u.T @ sys.rhs
    if reg.method == "tikhonov":
        x = vt.T @ (_filter(s, "tikhonov", alpha, reg.tau) * beta)
        rank = int(np.sum(s * s > alpha)) if alpha > 0 else int(np.sum(s > 0))
        used = float(alpha)
    else:
        x = vt.T @ (_filter(s, "tsvd", 0.0, reg.tau) * beta)
        rank = int(np.sum(s >= reg.tau * s[0]))
        used = float(reg.tau)
    residual = float(np.linalg.norm(sys.matrix @ x - sys.rhs))
    cond = float(s[0] / s[-1]) if s[-1] > 0 else float("inf")
    report = SolveReport(residual, float(np.linalg.norm(x)), cond, rank, used, tuple(flags))
    sys.report = report
    return x, report


def tikhonov_sweep(sys, alphas):
    """Residual and solution norms over a list of alphas (same SVD)."""
    u, s, vt = sys.svd()
    beta = u.T @ sys.rhs
    rows = []
    for a in alphas:
        coef = _filter(s, "tikhonov", a, 0.5) * beta
        rows.append((float(a), _residual_norm(u, s, beta, sys.rhs, a), float(np.linalg.norm(coef))))
    return rows
