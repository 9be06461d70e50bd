import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from extsolve.kernels import (KINDS, OperatorSpec, SingularityError, UnsupportedOperatorError,
                              conormal_kernel_x, conormal_kernel_y, pde_residual, phi)

OPS = [OperatorSpec("Laplace2D"), OperatorSpec("Laplace3D"), OperatorSpec("Helmholtz3D", a=1.0),
       OperatorSpec("Lame3D", mu=1.0, lam=1.0)]
IDS = [op.kind for op in OPS]

coord = st.floats(-3, 3, allow_nan=False)


def kelvin_oracle(mu, lam, r):
    """Kelvin matrix written directly from phi_3 = 1/(4 pi |r|) and its gradient."""
    rho = np.linalg.norm(r)
    phi3 = 1.0 / (4 * np.pi * rho)
    dphi3 = -r / (4 * np.pi * rho**3)
    out = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            out[i, j] = ((i == j) * (lam + 3 * mu) * phi3 - (lam + mu) * r[j] * dphi3[i])
    return out / (2 * mu * (lam + 2 * mu))


def fd_conormal(op, x, y, n, h=1e-6, wrt="x"):
    """Central-difference conormal derivative of phi in x (or y)."""
    d = op.dim
    grad = []
    for e in np.eye(d):
        if wrt == "x":
            grad.append((phi(op, x + h * e, y) - phi(op, x - h * e, y)) / (2 * h))
        else:
            grad.append((phi(op, x, y + h * e) - phi(op, x, y - h * e)) / (2 * h))
    grad = np.stack(grad, axis=-1)  # [i, j, l]
    dn = grad @ n
    if op.kind != "Lame3D":
        return dn
    div = np.einsum("ljl->j", grad)
    return op.mu * dn + (op.mu + op.lam) * np.outer(n, div)


def test_laplace3d_unit_distance():
    assert abs(phi(OPS[1], [0, 0, 0], [1, 0, 0])[0, 0] - 1 / (4 * np.pi)) < 1e-15
    assert abs(phi(OPS[1], [0, 0, 0], [1, 0, 0])[0, 0] - 0.079577472) < 1e-9


def test_laplace2d_unit_distance_is_zero():
    assert phi(OPS[0], [0.3, 0.1], [0.3, 1.1])[0, 0] == pytest.approx(0.0, abs=1e-16)


def test_helmholtz_decaying_value():
    op = OperatorSpec("Helmholtz3D", a=2.0)
    assert abs(phi(op, [0, 0, 0], [0, 0, 1])[0, 0] - np.exp(-2) / (4 * np.pi)) < 1e-15
    assert abs(phi(op, [0, 0, 0], [0, 0, 1])[0, 0] - 0.0107696397) < 1e-10


def test_helmholtz_growing_branch_evaluable_but_unsupported():
    op = OperatorSpec("Helmholtz3D", a=2.0, branch="growing")
    assert phi(op, [0, 0, 0], [0, 0, 1])[0, 0] == pytest.approx(np.exp(2) / (4 * np.pi))
    with pytest.raises(UnsupportedOperatorError):
        op.require_solver_support()


def test_lame_entries():
    m = phi(OPS[3], [1, 0, 0], [0, 0, 0])
    assert m.shape == (3, 3)
    assert m[0, 1] == 0.0
    assert abs(m[0, 0] - 1 / (4 * np.pi)) < 1e-15


@given(st.tuples(coord, coord, coord), st.tuples(coord, coord, coord),
       st.floats(0.2, 5.0), st.floats(-0.9, 3.0))
def test_lame_matches_kelvin_oracle(x, y, mu, lam_ratio):
    x, y = np.array(x), np.array(y)
    if np.linalg.norm(x - y) < 1e-2:
        return
    lam = lam_ratio * mu * 1.5
    op = OperatorSpec("Lame3D", mu=mu, lam=lam)
    np.testing.assert_allclose(phi(op, x, y), kelvin_oracle(mu, lam, x - y), rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("kind,kw", [("Helmholtz3D", {"a": 0.0}), ("Helmholtz3D", {"a": -1.0}),
                                     ("Lame3D", {"mu": 0.0}), ("Lame3D", {"mu": 1.0, "lam": -2.5}),
                                     ("Stokes3D", {})])
def test_invalid_operator_parameters(kind, kw):
    with pytest.raises(ValueError):
        OperatorSpec(kind, **kw)


@pytest.mark.parametrize("op", OPS, ids=IDS)
def test_coincident_points_raise_with_indices(op):
    x = np.zeros(op.dim)
    with pytest.raises(SingularityError) as info:
        phi(op, x, x)
    assert info.value.indices == (0, 0)


@pytest.mark.parametrize("op", OPS, ids=IDS)
@given(data=st.data())
def test_translation_invariance_and_symmetry(op, data):
    pts = data.draw(st.lists(st.tuples(*[coord] * op.dim), min_size=3, max_size=3))
    x, y, t = (np.array(p) for p in pts)
    if np.linalg.norm(x - y) < 1e-2:
        return
    a = phi(op, x, y)
    np.testing.assert_allclose(phi(op, x + t, y + t), a, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(phi(op, y, x), a, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(a, a.T, rtol=1e-12, atol=1e-15)


def test_double_layer_kernel_laplace2d_value():
    k = conormal_kernel_y(OPS[0], [0, 0], [1, 0], [1, 0])[0, 0]
    fd = -fd_conormal(OPS[0], np.zeros(2), np.array([1.0, 0]), np.array([1.0, 0]), wrt="y")[0, 0]
    assert abs(k - 1 / (2 * np.pi)) < 1e-15
    assert abs(k - fd) < 1e-8


def test_double_layer_kernel_vanishes_for_tangential_normal():
    assert conormal_kernel_y(OPS[1], [0, 0, 0], [1, 0, 0], [0, 1, 0])[0, 0] == 0.0


@pytest.mark.parametrize("op", OPS, ids=IDS)
def test_conormal_kernels_match_finite_differences(op):
    rng = np.random.default_rng(3)
    for _ in range(5):
        y = rng.uniform(-1, 1, op.dim)
        n = rng.standard_normal(op.dim)
        n /= np.linalg.norm(n)
        x = y + rng.uniform(0.8, 1.2) * n[::-1] / np.linalg.norm(n)
        kx = conormal_kernel_x(op, x, n, y)
        assert np.abs(kx - fd_conormal(op, x, y, n)).max() < 1e-7
        # double layer kernel: -(B1_y Phi(., x))^T
        ky = conormal_kernel_y(op, x, y, n)
        assert np.abs(ky + fd_conormal(op, y, x, n).T).max() < 1e-7


@pytest.mark.parametrize("op", OPS, ids=IDS)
def test_conormal_x_equals_conormal_y_with_same_normal(op):
    x, y = np.full(op.dim, 0.3), np.full(op.dim, -0.4)
    n = np.ones(op.dim) / np.sqrt(op.dim)
    np.testing.assert_allclose(conormal_kernel_x(op, x, n, y), conormal_kernel_y(op, x, y, n),
                               rtol=1e-13, atol=1e-16)


@pytest.mark.parametrize("op", OPS, ids=IDS)
def test_conormal_fd_discrepancy_is_second_order(op):
    x, y = np.full(op.dim, 0.5), np.zeros(op.dim)
    n = np.eye(op.dim)[0]
    exact = conormal_kernel_x(op, x, n, y)
    e1 = np.abs(fd_conormal(op, x, y, n, h=1e-2) - exact).max()
    e2 = np.abs(fd_conormal(op, x, y, n, h=5e-3) - exact).max()
    assert 3.5 < e1 / e2 < 4.5


def test_pde_residual_examples():
    assert pde_residual(OPS[1], [0, 0, 0], [1, 0, 0], 1e-3) < 1e-5
    assert pde_residual(OPS[2], [0, 0, 0], [0.6, 0.8, 0], 1e-3) < 1e-4
    assert pde_residual(OPS[3], [0, 0, 0], [0.3, -0.5, 0.81], 1e-3) < 1e-4
    with pytest.raises(ValueError):
        pde_residual(OPS[1], [0, 0, 0], [0.005, 0, 0], 1e-3)


@pytest.mark.parametrize("op", OPS, ids=IDS)
def test_pde_residual_second_order(op):
    x, y = np.array([0.7, -0.2, 0.4][:op.dim]), np.zeros(op.dim)
    r1 = pde_residual(op, y, x, 1e-2)
    r2 = pde_residual(op, y, x, 5e-3)
    assert 3.0 < r1 / r2 < 5.0


def test_kinds_listed():
    assert set(KINDS) == {op.kind for op in OPS}
