"""Point-source manufactured solutions ``u(x) = Phi(x, z0) e``."""

from dataclasses import dataclass

import numpy as np

from .geometry import GeometryError, classify
from .kernels import conormal_x_matrix, phi_matrix
from .potentials import LayerDensity
from .problems import CauchyData


@dataclass(frozen=True, eq=False)
class ManufacturedSolution:
    """Column ``column`` of the fundamental solution with pole ``z0``.

    ``amplitude`` scales the whole field; ``amplitude=0`` gives the zero
    solution.
    """

    op: object
    z0: np.ndarray
    column: int = 0
    amplitude: float = 1.0

    def __post_init__(self):
        z0 = np.asarray(self.z0, dtype=float).reshape(-1)
        if z0.size != self.op.dim:
            raise ValueError(f"z0 must have {self.op.dim} coordinates")
        if not 0 <= self.column < self.op.k:
            raise ValueError(f"column must lie in [0, {self.op.k})")
        object.__setattr__(self, "z0", z0)

    def field(self, x):
        """Exact values at ``x``, shape ``(M, k)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.amplitude * phi_matrix(self.op, x, self.z0[None])[:, 0, :, self.column]

    def conormal(self, x, nx):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.amplitude * conormal_x_matrix(self.op, x, np.atleast_2d(nx),
                                                  self.z0[None])[:, 0, :, self.column]

    def _check(self, boundary):
        if classify(boundary, self.z0[None])[0] != "outside":
            raise GeometryError(f"source point {self.z0.tolist()} is not outside the {boundary.kind}")

    def dirichlet(self, boundary):
        self._check(boundary)
        return LayerDensity(boundary, self.field(boundary.nodes))

    def neumann(self, boundary):
        self._check(boundary)
        return LayerDensity(boundary, self.conormal(boundary.nodes, boundary.normals))

    def cauchy_data(self, boundary):
        return CauchyData(boundary, self.dirichlet(boundary), self.neumann(boundary))


def manufactured_solution(op, z0, column=0, amplitude=1.0):
    return ManufacturedSolution(op, z0, column, amplitude)
