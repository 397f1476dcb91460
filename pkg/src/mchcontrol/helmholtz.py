"""Dirichlet Helmholtz operator (1 - dxx) and banded SPD solves.

The operator is the tridiagonal matrix I - D2 on interior nodes. Both it and
the implicit-diffusion matrix I - c*D2 share one prefactored banded Cholesky
representation, so apply(solve(y)) returns y to solver precision and the
solve is its own transpose.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

from .errors import DomainMismatchError
from .grid import Domain1D, as_field, d2


class ShiftedLaplacianSolver:
    """Prefactored Cholesky of (I - c * D2), c >= 0, on interior nodes."""

    def __init__(self, domain: Domain1D, c: float):
        if c < 0:
            raise ValueError("shift c must be nonnegative")
        self.domain = domain
        self.c = c
        n = domain.n_interior
        r = c / domain.h ** 2
        band = np.zeros((2, n))
        band[0, 1:] = -r          # superdiagonal
        band[1, :] = 1.0 + 2.0 * r
        self._factor = (cholesky_banded(band), False)

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = as_field(self.domain, b)
        return cho_solve_banded(self._factor, b)


class HelmholtzOperator:
    """apply(u) = u - u_xx and its inverse on the Dirichlet grid."""

    def __init__(self, domain: Domain1D):
        self.domain = domain
        self._solver = ShiftedLaplacianSolver(domain, 1.0)

    def apply(self, u: np.ndarray) -> np.ndarray:
        u = as_field(self.domain, u)
        return u - d2(self.domain, u)

    def solve(self, y: np.ndarray) -> np.ndarray:
        y = as_field(self.domain, y)
        return self._solver.solve(y)

    def velocity(self, y: np.ndarray):
        """Velocity u, its derivative, and u_xx = u - y (exact identity)."""
        from .grid import d1

        u = self.solve(y)
        return u, d1(self.domain, u), u - y


_op_cache: dict = {}


def get_operator(domain: Domain1D) -> HelmholtzOperator:
    """Shared per-domain operator; the factorization is immutable."""
    key = (domain.L, domain.n_interior)
    op = _op_cache.get(key)
    if op is None:
        op = HelmholtzOperator(domain)
        _op_cache[key] = op
    return op
