"""Single- and double-layer potentials, boundary traces and jump diagnostics.

Sign conventions (outward normals ``nu``)::

    V(v)(x)  =  sum_q w_q Phi(x, y_q) v(y_q)
    W(u0)(x) = -sum_q w_q (B1_y Phi(., x))^T(y_q) u0(y_q)

so that the Green representation reads ``chi_Omega u = W(B0 u) + V(B1 u)``
and the conormal derivative of the single layer jumps by the density,
``B1 V(v)|inside - B1 V(v)|outside = v``.

On-surface values (traces, one-sided limits) are obtained kernel-agnostically:
the potential is evaluated at offsets ``x -/+ eps_l nu(x)`` where plain
quadrature is accurate, and polynomially extrapolated to ``eps = 0``.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .kernels import conormal_x_matrix, conormal_y_matrix, phi_matrix, to_blocks
from .geometry import INSIDE, classify

logger = logging.getLogger(__name__)

NEAR_FIELD_FACTOR = 3.0
# first offset in units of local node spacing, per ambient dimension
EPS0_FACTOR = {2: 2.0, 3: 1.5}
EXTRAPOLATION_LEVELS = 4
EXTRAPOLATION_RTOL = 1e-2
_CHUNK_ENTRIES = 2_000_000


class NearSingularWarning(RuntimeWarning):
    pass


@dataclass
class LayerDensity:
    """``k``-vector values at the quadrature nodes of ``boundary``.

    ``error_estimate`` and ``flags`` are filled by trace operations.
    """

    boundary: object
    values: np.ndarray
    error_estimate: float = 0.0
    flags: tuple = ()

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if len(vals) != self.boundary.n_nodes:
            raise ValueError(
                f"density has {len(vals)} values, boundary has {self.boundary.n_nodes} nodes")
        if not np.all(np.isfinite(vals)):
            raise ValueError("density has non-finite entries")
        self.values = vals

    @property
    def k(self):
        return self.values.shape[1]

    def __add__(self, other):
        return LayerDensity(self.boundary, self.values + _raw(other),
                            self.error_estimate + getattr(other, "error_estimate", 0.0),
                            tuple(dict.fromkeys(self.flags + getattr(other, "flags", ()))))

    def __sub__(self, other):
        return self + (-1.0) * other

    def __mul__(self, alpha):
        return LayerDensity(self.boundary, alpha * self.values,
                            abs(alpha) * self.error_estimate, self.flags)

    __rmul__ = __mul__

    def __neg__(self):
        return (-1.0) * self


def _raw(v):
    return v.values if isinstance(v, LayerDensity) else np.asarray(v, dtype=float)


def density(boundary, values, k=1):
    """Wrap ``values`` (callable of nodes, scalar or array) as a LayerDensity."""
    if callable(values):
        values = values(boundary.nodes)
    vals = np.asarray(values, dtype=float)
    if vals.ndim == 0:
        vals = np.full((boundary.n_nodes, k), float(vals))
    return LayerDensity(boundary, vals.reshape(boundary.n_nodes, -1))


def _density_values(b, v, k):
    vals = _raw(v)
    if isinstance(v, LayerDensity) and v.boundary is not b:
        raise ValueError("density belongs to a different boundary")
    vals = vals.reshape(b.n_nodes, -1)
    if vals.shape[1] != k:
        raise ValueError(f"density has {vals.shape[1]} components, operator needs {k}")
    return vals


@dataclass
class PotentialField:
    """Potential values at evaluation points.

    ``side`` holds the containment tag of each point relative to the
    generating boundary; ``near_singular`` marks points inside the
    near-field band, where plain quadrature is unreliable.
    """

    points: np.ndarray
    values: np.ndarray
    side: np.ndarray
    near_singular: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.near_singular is None:
            self.near_singular = np.zeros(len(self.points), dtype=bool)

    @property
    def flagged(self):
        return bool(np.any(self.near_singular))


def _chunk(n_sources, k=1):
    return max(1, _CHUNK_ENTRIES // max(1, n_sources * k * k))


def near_field_mask(b, targets, factor=NEAR_FIELD_FACTOR):
    """True for targets closer than ``factor`` x local spacing to a node of ``b``."""
    targets = np.atleast_2d(targets)
    out = np.zeros(len(targets), dtype=bool)
    band = factor * b.spacing
    step = _chunk(b.n_nodes)
    for s in range(0, len(targets), step):
        d = np.linalg.norm(targets[s:s + step, None, :] - b.nodes[None], axis=2)
        out[s:s + step] = np.any(d < band[None], axis=1)
    return out


def _quadrature_apply(kernel_fn, b, vals, targets):
    """sum_q w_q K(x_m, y_q) vals_q in fixed per-target summation order."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    wv = b.weights[:, None] * vals
    out = np.empty((len(targets), vals.shape[1]))
    step = _chunk(b.n_nodes, vals.shape[1])
    for s in range(0, len(targets), step):
        kmat = kernel_fn(targets[s:s + step])
        out[s:s + step] = np.einsum("mnij,nj->mi", kmat, wv)
    return out


def single_layer_values(op, b, v, targets):
    """Plain-quadrature single layer at ``targets``; no near-field checks."""
    vals = _density_values(b, v, op.k)
    return _quadrature_apply(lambda t: phi_matrix(op, t, b.nodes), b, vals, targets)


def double_layer_values(op, b, u0, targets):
    """Plain-quadrature double layer (leading minus included)."""
    vals = _density_values(b, u0, op.k)
    return _quadrature_apply(lambda t: conormal_y_matrix(op, t, b.nodes, b.normals), b, vals, targets)


def single_layer_conormal_values(op, b, v, targets, target_normals):
    """``B1`` (in the target variable) of the single layer at ``targets``."""
    vals = _density_values(b, v, op.k)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    target_normals = np.atleast_2d(target_normals)
    out = np.empty((len(targets), op.k))
    wv = b.weights[:, None] * vals
    step = _chunk(b.n_nodes, op.k)
    for s in range(0, len(targets), step):
        kmat = conormal_x_matrix(op, targets[s:s + step], target_normals[s:s + step], b.nodes)
        out[s:s + step] = np.einsum("mnij,nj->mi", kmat, wv)
    return out


def _field(b, targets, values, near_ok):
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    near = near_field_mask(b, targets)
    if np.any(near) and not near_ok:
        msg = (f"{int(near.sum())} target(s) lie within {NEAR_FIELD_FACTOR:g}x node spacing of the "
               "boundary; plain quadrature is near-singular there (use a trace operation)")
        warnings.warn(msg, NearSingularWarning, stacklevel=3)
        logger.warning(msg)
    return PotentialField(targets, values, classify(b, targets), near)


def eval_single_layer(op, b, v, targets, near_ok=False):
    """Single-layer potential of density ``v`` on ``b`` at ``targets``."""
    values = single_layer_values(op, b, v, targets)
    return _field(b, targets, values, near_ok)


def eval_double_layer(op, b, u0, targets, near_ok=False):
    """Double-layer potential of density ``u0`` on ``b`` at ``targets``."""
    values = double_layer_values(op, b, u0, targets)
    return _field(b, targets, values, near_ok)


def green_representation(op, b, u0, u1, targets):
    """``W(u0) + V(u1)``: equals ``u`` inside and 0 outside for true Cauchy data."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    tags = classify(b, targets)
    if np.any(tags == "on-boundary"):
        raise ValueError("green_representation targets must be off the boundary")
    values = double_layer_values(op, b, u0, targets) + single_layer_values(op, b, u1, targets)
    return _field(b, targets, values, near_ok=False)


# ---------------------------------------------------------------------------
# offset extrapolation to the boundary
# ---------------------------------------------------------------------------
def _lagrange_zero_weights(levels):
    """Weights c_l with p(0) = sum_l c_l p(l) for polynomials of degree < levels."""
    t = np.arange(1, levels + 1, dtype=float)
    c = np.empty(levels)
    for i in range(levels):
        others = np.delete(t, i)
        c[i] = np.prod(others / (others - t[i]))
    return c


def offset_points(b, side, eps0_factor=None, levels=EXTRAPOLATION_LEVELS):
    """Offset copies of the nodes of ``b``: list of ``(n, d)`` arrays, nearest first."""
    sgn = -1.0 if side == INSIDE else 1.0
    if eps0_factor is None:
        eps0_factor = EPS0_FACTOR[b.ambient_dim]
    eps0 = eps0_factor * b.spacing
    return [b.nodes + sgn * (l * eps0)[:, None] * b.normals for l in range(1, levels + 1)]


def offset_limit(evaluate, b, side, eps0_factor=None, levels=EXTRAPOLATION_LEVELS):
    """One-sided boundary limit of a field by offset evaluation + extrapolation.

    ``evaluate(points, normals)`` returns ``(n, k)`` values; ``side`` is
    ``"inside"`` or ``"outside"``. Offsets are ``l * eps0_factor * h(x)``
    for ``l = 1..levels`` with ``h`` the local spacing.

    Returns ``(limit, error_estimate, scale)``: the estimate is the change of
    the extrapolated value when the farthest level is dropped, ``scale`` the
    largest sampled magnitude.
    """
    samples = np.stack([evaluate(p, b.normals) for p in offset_points(b, side, eps0_factor, levels)])
    limit = np.tensordot(_lagrange_zero_weights(levels), samples, axes=1)
    if levels > 1:
        coarse = np.tensordot(_lagrange_zero_weights(levels - 1), samples[:-1], axes=1)
        err = float(np.abs(limit - coarse).max())
    else:
        err = float("inf")
    return limit, err, float(np.abs(samples).max())


def _flag(err, scale, what, rtol):
    if err > rtol * scale and err > 1e-14:
        logger.warning("%s: extrapolation disagreement %.2e exceeds tolerance", what, err)
        return (f"{what}: extrapolation disagreement {err:.2e}",)
    return ()


def boundary_limit(evaluate, b, side=INSIDE, what="trace", ref=0.0, rtol=EXTRAPOLATION_RTOL, **kw):
    """Offset-extrapolated one-sided limit of any field, as a flagged LayerDensity."""
    limit, err, scale = offset_limit(evaluate, b, side, **kw)
    return LayerDensity(b, limit, err, _flag(err, max(scale, ref), what, rtol))


def _ref(v):
    return float(np.abs(_raw(v)).max(initial=0.0))


def trace_single_layer(op, b, v, on, side=INSIDE, rtol=EXTRAPOLATION_RTOL, **kw):
    """``B0 V(v)`` at the nodes of ``on``.

    Disjoint surfaces use plain quadrature. The self-trace (``on is b``)
    uses offset extrapolation from ``side``; the single layer is continuous,
    so both sides agree up to the reported error estimate.
    """
    if on is not b:
        vals = single_layer_values(op, b, v, on.nodes)
        flags = ()
        if np.any(near_field_mask(b, on.nodes)):
            flags = ("trace: target surface inside near-field band",)
        return LayerDensity(on, vals, 0.0, flags)
    return boundary_limit(lambda p, n: single_layer_values(op, b, v, p), b, side,
                          "single-layer self-trace", _ref(v), rtol, **kw)


def trace_double_layer(op, b, u0, on, side=INSIDE, rtol=EXTRAPOLATION_RTOL, **kw):
    """One-sided ``B0 W(u0)`` at the nodes of ``on`` (plain quadrature when disjoint)."""
    if on is not b:
        vals = double_layer_values(op, b, u0, on.nodes)
        flags = ()
        if np.any(near_field_mask(b, on.nodes)):
            flags = ("trace: target surface inside near-field band",)
        return LayerDensity(on, vals, 0.0, flags)
    return boundary_limit(lambda p, n: double_layer_values(op, b, u0, p), b, side,
                          f"double-layer trace ({side})", _ref(u0), rtol, **kw)


def principal_value_double_layer(op, b, u0, **kw):
    """Principal value of ``W(u0)`` on ``b``: mean of the two one-sided limits."""
    inner = trace_double_layer(op, b, u0, b, side=INSIDE, **kw)
    outer = trace_double_layer(op, b, u0, b, side="outside", **kw)
    return 0.5 * (inner + outer)


def conormal_trace_single_layer(op, b, v, side, rtol=EXTRAPOLATION_RTOL, **kw):
    """One-sided ``B1 V(v)`` on ``b`` taken from ``side``."""
    return boundary_limit(lambda p, n: single_layer_conormal_values(op, b, v, p, n), b, side,
                          f"conormal trace ({side})", _ref(v), rtol, **kw)


def conormal_jump_single_layer(op, b, v, rtol=EXTRAPOLATION_RTOL, **kw):
    """``B1 V(v)|inside - B1 V(v)|outside``, which reproduces ``v``."""
    inner = conormal_trace_single_layer(op, b, v, INSIDE, rtol, **kw)
    outer = conormal_trace_single_layer(op, b, v, "outside", rtol, **kw)
    return inner - outer


def single_layer_self_trace_matrix(op, b, side=INSIDE, eps0_factor=None,
                                   levels=EXTRAPOLATION_LEVELS):
    """Block matrix of ``v -> B0 V(v)`` on ``b`` itself (offset extrapolated)."""
    c = _lagrange_zero_weights(levels)
    mat = 0.0
    for cl, pts in zip(c, offset_points(b, side, eps0_factor, levels)):
        mat = mat + cl * to_blocks(phi_matrix(op, pts, b.nodes))
    return mat * np.repeat(b.weights, op.k)[None, :]
