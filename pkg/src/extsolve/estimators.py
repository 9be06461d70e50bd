"""scikit-learn style estimators for fitting boundary data.

``fit(X, y)`` takes collocation points ``X`` of shape ``(M, d)`` and
values ``y`` of shape ``(M,)`` or ``(M, k)``; ``predict`` evaluates the
fitted solution of ``L u = 0`` at new points inside the auxiliary shell.

Example
-------
>>> import numpy as np
>>> from extsolve.estimators import MFSExtension
>>> t = np.linspace(0, 2 * np.pi, 64, endpoint=False)
>>> X = np.c_[np.cos(t), np.sin(t)]
>>> est = MFSExtension(shell_radius=3.0, n_sources=32).fit(X, X[:, 0])
>>> float(np.round(est.predict([[0.5, 0.2]])[0], 8))
0.5
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .geometry import build_boundary, source_sequence, strictly_inside
from .kernels import OperatorSpec
from .problems import DomainError
from .reglinalg import RegConfig, RegularizedSystem, assemble, solve

_SHELL_KIND = {2: "circle", 3: "sphere"}


class _ExtensionBase(RegressorMixin, BaseEstimator):
    def _operator(self):
        return OperatorSpec(self.operator, a=self.a, branch=self.branch, mu=self.mu, lam=self.lam)

    def _reg(self):
        return RegConfig(method=self.method, alpha=self.alpha,
                         tau=self.tau if self.tau is not None else 1e-12)

    def _shell(self, n_nodes):
        op = self.op_
        return build_boundary({"kind": _SHELL_KIND[op.dim], "center": self.center_,
                               "radii": [self.shell_radius], "n_nodes": n_nodes})

    def _validate(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        self.op_ = self._operator()
        self.op_.require_solver_support()
        if X.shape[1] != self.op_.dim:
            raise ValueError(f"X has {X.shape[1]} columns, {self.operator} needs {self.op_.dim}")
        y2 = y.reshape(len(X), -1)
        if y2.shape[1] != self.op_.k:
            raise ValueError(f"y has {y2.shape[1]} components, {self.operator} needs {self.op_.k}")
        self.n_features_in_ = X.shape[1]
        self._y_ndim = y.ndim
        self.center_ = (np.zeros(self.op_.dim) if self.center is None
                        else np.asarray(self.center, dtype=float))
        return X, y2

    def _fit_matrix(self, A, y2):
        system = RegularizedSystem(A, y2.reshape(-1), self._reg())
        self.coef_, self.report_ = solve(system)

    def _check_points(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        if not np.all(strictly_inside(self.shell_, X)):
            raise DomainError("prediction points must lie strictly inside the auxiliary shell")
        return X

    def _shape(self, values):
        values = values.reshape(-1, self.op_.k)
        return values[:, 0] if self._y_ndim == 1 else values


class MFSExtension(_ExtensionBase):
    """Method of fundamental solutions with nested sources on a shell.

    Parameters
    ----------
    operator : str
        Operator kind (``Laplace2D``, ``Laplace3D``, ``Helmholtz3D``, ``Lame3D``).
    shell_radius : float
        Radius of the source circle or sphere.
    n_sources : int
        Number of point sources.
    center : array-like or None
        Shell center (origin by default).
    method, alpha, tau : regularisation settings, see :class:`RegConfig`.
    a, branch, mu, lam : operator parameters, see :class:`OperatorSpec`.
    """

    def __init__(self, operator="Laplace2D", shell_radius=3.0, n_sources=64, center=None,
                 method="tikhonov", alpha=None, tau=None, a=1.0, branch="decaying",
                 mu=1.0, lam=1.0):
        self.operator = operator
        self.shell_radius = shell_radius
        self.n_sources = n_sources
        self.center = center
        self.method = method
        self.alpha = alpha
        self.tau = tau
        self.a = a
        self.branch = branch
        self.mu = mu
        self.lam = lam

    def fit(self, X, y):
        X, y2 = self._validate(X, y)
        self.shell_ = self._shell(max(int(self.n_sources), 4))
        if not np.all(strictly_inside(self.shell_, X)):
            raise DomainError("collocation points must lie strictly inside the source shell")
        self.sources_ = source_sequence(self.shell_, int(self.n_sources))
        self._fit_matrix(assemble(self.op_, self.sources_, X, mode="mfs"), y2)
        return self

    def predict(self, X):
        X = self._check_points(X)
        return self._shape(assemble(self.op_, self.sources_, X, mode="mfs") @ self.coef_)


class SingleLayerExtension(_ExtensionBase):
    """Indirect single-layer potential with the density on a shell.

    Parameters are those of :class:`MFSExtension`, with ``n_nodes`` (the
    number of quadrature nodes on the shell) in place of ``n_sources``.
    """

    def __init__(self, operator="Laplace2D", shell_radius=2.0, n_nodes=128, center=None,
                 method="tikhonov", alpha=None, tau=None, a=1.0, branch="decaying",
                 mu=1.0, lam=1.0):
        self.operator = operator
        self.shell_radius = shell_radius
        self.n_nodes = n_nodes
        self.center = center
        self.method = method
        self.alpha = alpha
        self.tau = tau
        self.a = a
        self.branch = branch
        self.mu = mu
        self.lam = lam

    def fit(self, X, y):
        X, y2 = self._validate(X, y)
        self.shell_ = self._shell(int(self.n_nodes))
        if not np.all(strictly_inside(self.shell_, X)):
            raise DomainError("collocation points must lie strictly inside the density shell")
        self._fit_matrix(assemble(self.op_, self.shell_, X, mode="single-layer"), y2)
        return self

    def predict(self, X):
        X = self._check_points(X)
        return self._shape(assemble(self.op_, self.shell_, X, mode="single-layer") @ self.coef_)
