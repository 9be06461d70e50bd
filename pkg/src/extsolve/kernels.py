"""Fundamental solutions and conormal-derivative kernels.

Supported operators (all with ``L Phi(., y) = delta_y``):

=============  ==============================  ==========================
kind           operator                        fundamental solution
=============  ==============================  ==========================
Laplace2D      ``-Delta``                      ``-ln|r| / (2 pi)``
Laplace3D      ``-Delta``                      ``1 / (4 pi |r|)``
Helmholtz3D    ``a**2 - Delta``                ``exp(-a |r|) / (4 pi |r|)``
Lame3D         ``-mu Delta - (mu+lam) grad div``  Kelvin matrix
=============  ==============================  ==========================

The conormal derivative is ``d/dnu`` for the scalar operators and the
traction-like ``mu d/dnu + (mu + lam) nu div`` for Lame3D.

Kernels are evaluated on whole point sets at once. Batched routines return
arrays of shape ``(M, N, k, k)``; :func:`to_blocks` flattens them into
``(M*k, N*k)`` matrices with ``k x k`` blocks.
"""

from dataclasses import dataclass

import numpy as np

KINDS = ("Laplace2D", "Laplace3D", "Helmholtz3D", "Lame3D")
SINGULAR_RTOL = 1e-13


class SingularityError(ValueError):
    """Kernel requested at (numerically) coincident points."""

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = tuple(indices)


class UnsupportedOperatorError(ValueError):
    pass


@dataclass(frozen=True)
class OperatorSpec:
    """Operator kind and parameters.

    Parameters
    ----------
    kind : str
        One of ``Laplace2D``, ``Laplace3D``, ``Helmholtz3D``, ``Lame3D``.
    a : float
        Helmholtz constant ``|a| > 0``.
    branch : str
        Helmholtz branch, ``decaying`` (default) or ``growing``.
    mu, lam : float
        Lame constants with ``mu > 0`` and ``2 mu + lam > 0``.
    """

    kind: str
    a: float = 1.0
    branch: str = "decaying"
    mu: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "Helmholtz3D":
            if not self.a > 0:
                raise ValueError(f"Helmholtz constant must be positive, got {self.a}")
            if self.branch not in ("decaying", "growing"):
                raise ValueError(f"unknown Helmholtz branch {self.branch!r}")
        if self.kind == "Lame3D":
            if not self.mu > 0:
                raise ValueError(f"Lame mu must be positive, got {self.mu}")
            if not 2 * self.mu + self.lam > 0:
                raise ValueError(f"need 2 mu + lam > 0, got mu={self.mu}, lam={self.lam}")

    @property
    def dim(self):
        return 2 if self.kind == "Laplace2D" else 3

    @property
    def k(self):
        """Number of solution components."""
        return 3 if self.kind == "Lame3D" else 1

    def require_solver_support(self):
        """Raise for kernels the extension solvers must not use."""
        if self.kind == "Helmholtz3D" and self.branch != "decaying":
            raise UnsupportedOperatorError(
                "only the decaying Helmholtz kernel exp(-a r)/(4 pi r) is supported by the "
                "solvers; the single-layer representation is not available for the growing branch")


def laplace(dim):
    return OperatorSpec("Laplace2D" if dim == 2 else "Laplace3D")


# ---------------------------------------------------------------------------
# batched evaluation on differences r = x - y
# ---------------------------------------------------------------------------
def _check_distance(r, scale):
    dist = np.linalg.norm(r, axis=-1)
    eps = SINGULAR_RTOL * max(1.0, scale)
    bad = dist <= eps
    if np.any(bad):
        idx = np.argwhere(bad)[0]
        raise SingularityError(
            f"kernel evaluated at coincident points (distance {dist[tuple(idx)]:.3e}) "
            f"at index {tuple(int(i) for i in idx)}", indices=tuple(int(i) for i in idx))
    return dist


def _scalar_profile(op, rho):
    """Radial profile g(rho) and derivative g'(rho) of a scalar kernel."""
    if op.kind == "Laplace2D":
        return -np.log(rho) / (2 * np.pi), -1.0 / (2 * np.pi * rho)
    if op.kind == "Laplace3D":
        g = 1.0 / (4 * np.pi * rho)
        return g, -g / rho
    sgn = -1.0 if op.branch == "decaying" else 1.0
    e = np.exp(sgn * op.a * rho)
    g = e / (4 * np.pi * rho)
    return g, g * (sgn * op.a - 1.0 / rho)


def _kelvin_constants(op):
    den = 8 * np.pi * op.mu * (op.lam + 2 * op.mu)
    return (op.lam + 3 * op.mu) / den, (op.lam + op.mu) / den


def phi_r(op, r, scale=1.0):
    """Fundamental solution at differences ``r`` of shape ``(..., d)``.

    Returns shape ``(..., k, k)``.
    """
    r = np.asarray(r, dtype=float)
    rho = _check_distance(r, scale)
    if op.k == 1:
        g, _ = _scalar_profile(op, rho)
        return g[..., None, None]
    c1, c2 = _kelvin_constants(op)
    eye = np.eye(3)
    return (c1 / rho)[..., None, None] * eye + c2 * r[..., :, None] * r[..., None, :] / (rho**3)[..., None, None]


def grad_phi_r(op, r, scale=1.0):
    """Gradient with respect to ``x`` of ``Phi(x - y)``; shape ``(..., k, k, d)``."""
    r = np.asarray(r, dtype=float)
    rho = _check_distance(r, scale)
    if op.k == 1:
        _, dg = _scalar_profile(op, rho)
        return (dg / rho)[..., None, None, None] * r[..., None, None, :]
    c1, c2 = _kelvin_constants(op)
    eye = np.eye(3)
    inv3 = 1.0 / rho**3
    # d_k Phi_ij = -c1 d_ij r_k / rho^3 + c2 (d_ik r_j + d_jk r_i) / rho^3 - 3 c2 r_i r_j r_k / rho^5
    t1 = -c1 * eye[:, :, None] * r[..., None, None, :]
    t2 = c2 * (eye[:, None, :] * r[..., None, :, None] + eye[None, :, :] * r[..., :, None, None])
    t3 = -3 * c2 * r[..., :, None, None] * r[..., None, :, None] * r[..., None, None, :] / (rho**2)[..., None, None, None]
    return (t1 + t2 + t3) * inv3[..., None, None, None]


def apply_conormal(op, grad, n):
    """Apply the conormal operator column-wise.

    ``grad[..., i, j, l]`` is ``d_l`` of component ``i`` of column ``j``;
    ``n`` has shape broadcastable to ``(..., d)``. Returns ``(..., k, k)``.
    """
    n = np.asarray(n, dtype=float)
    dn = np.einsum("...ijl,...l->...ij", grad, n)
    if op.kind != "Lame3D":
        return dn
    div = np.einsum("...ljl->...j", grad)
    return op.mu * dn + (op.mu + op.lam) * n[..., :, None] * div[..., None, :]


def _pairwise(x, y):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    scale = float(max(np.abs(x).max(initial=0.0), np.abs(y).max(initial=0.0)))
    return x[:, None, :] - y[None, :, :], scale


def phi_matrix(op, x, y):
    """``Phi(x_m, y_n)`` for all pairs: shape ``(M, N, k, k)``."""
    r, scale = _pairwise(x, y)
    return phi_r(op, r, scale)


def _conormal_r(op, r, n, scale):
    """Conormal derivative in ``x`` of ``Phi(r)``, ``r = x - y``; shape ``(..., k, k)``."""
    rho = _check_distance(r, scale)
    rn = np.einsum("...l,...l->...", r, n)
    if op.k == 1:
        _, dg = _scalar_profile(op, rho)
        return (dg / rho * rn)[..., None, None]
    c1, c2 = _kelvin_constants(op)
    inv3 = 1.0 / rho**3
    outer_nr = n[..., :, None] * r[..., None, :]
    dn = (-c1 * rn[..., None, None] * np.eye(3) + c2 * (outer_nr + np.swapaxes(outer_nr, -1, -2))
          - 3 * c2 * (rn / rho**2)[..., None, None] * r[..., :, None] * r[..., None, :])
    dn = dn * inv3[..., None, None]
    # div of column j is (c2 - c1) r_j / rho^3
    return op.mu * dn + (op.mu + op.lam) * (c2 - c1) * outer_nr * inv3[..., None, None]


def conormal_x_matrix(op, x, nx, y):
    """Conormal derivative in ``x`` (normal ``nx`` at each target)."""
    r, scale = _pairwise(x, y)
    nx = np.atleast_2d(np.asarray(nx, dtype=float))[:, None, :]
    return _conormal_r(op, r, np.broadcast_to(nx, r.shape), scale)


def conormal_y_matrix(op, x, y, ny):
    """Double-layer kernel, including its leading minus.

    ``W(u0)(x) = sum_q w_q K(x, y_q) u0(y_q)`` with
    ``K(x, y) = -(B1_y Phi(., x))^T``. For the even kernels used here this
    equals the transpose of the x-conormal kernel taken with ``ny``.
    """
    r, scale = _pairwise(x, y)
    ny = np.atleast_2d(np.asarray(ny, dtype=float))[None, :, :]
    return np.swapaxes(_conormal_r(op, r, np.broadcast_to(ny, r.shape), scale), -1, -2)


def to_blocks(kmat):
    """``(M, N, k, k)`` -> ``(M*k, N*k)`` with point-major ordering."""
    m, n, k, _ = kmat.shape
    return kmat.transpose(0, 2, 1, 3).reshape(m * k, n * k)


# ---------------------------------------------------------------------------
# single-point API
# ---------------------------------------------------------------------------
def phi(op, x, y):
    """``Phi(x, y)`` as a ``k x k`` array."""
    return phi_matrix(op, x, y)[0, 0]


def conormal_kernel_y(op, x, y, ny):
    """Double-layer kernel at one pair (leading minus included)."""
    return conormal_y_matrix(op, x, y, ny)[0, 0]


def conormal_kernel_x(op, x, nx, y):
    """Conormal derivative of ``Phi(., y)`` at ``x`` along ``nx``."""
    return conormal_x_matrix(op, x, nx, y)[0, 0]


def apply_operator_fd(op, f, x, h):
    """Apply ``L`` to a vector field ``f`` at ``x`` with central differences.

    Returns ``(Lf, scale)`` where ``scale`` is the magnitude of the largest
    individual term, used to make residuals relative.
    """
    x = np.asarray(x, dtype=float)
    d = len(x)
    eye = np.eye(d)
    f0 = f(x)
    hess = {}
    for i in range(d):
        for j in range(i, d):
            if i == j:
                hess[i, i] = (f(x + h * eye[i]) - 2 * f0 + f(x - h * eye[i])) / h**2
            else:
                ei, ej = h * eye[i], h * eye[j]
                hess[i, j] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * h * h)
                hess[j, i] = hess[i, j]
    lap = sum(hess[i, i] for i in range(d))
    if op.kind in ("Laplace2D", "Laplace3D"):
        return -lap, max(np.abs(hess[i, i]).max() for i in range(d))
    if op.kind == "Helmholtz3D":
        return op.a**2 * f0 - lap, max(np.abs(op.a**2 * f0).max(), np.abs(lap).max(),
                                        max(np.abs(hess[i, i]).max() for i in range(d)))
    # f0 has shape (3, ...) with the field component first
    grad_div = np.stack([sum(hess[i, l][l] for l in range(d)) for i in range(d)])
    res = -op.mu * lap - (op.mu + op.lam) * grad_div
    scale = max(np.abs(op.mu * lap).max(), np.abs((op.mu + op.lam) * grad_div).max(),
                max(np.abs(op.mu * hess[i, i]).max() for i in range(d)))
    return res, scale


def pde_residual(op, y, x, h=1e-3):
    """Relative finite-difference residual of ``L Phi(., y)`` at ``x``.

    Every column of the kernel is checked; the result is the largest
    component residual divided by the largest second-derivative term.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.linalg.norm(x - y) <= 10 * h:
        raise ValueError("pde_residual needs |x - y| > 10 h")
    res, scale = apply_operator_fd(op, lambda p: phi(op, p, y), x, h)
    return float(np.abs(res).max() / scale)
