import math

import numpy as np
import pytest

from mchcontrol.grid import Domain1D, inner_h
from mchcontrol.helmholtz import (ShiftedLaplacianSolver, HelmholtzOperator,
                                  get_operator)


def disc_eig(domain, m):
    return (2.0 - 2.0 * math.cos(m * math.pi * domain.h / domain.L)) \
        / domain.h ** 2


def test_round_trip(rng):
    dom = Domain1D(2.0, 64)
    op = get_operator(dom)
    for _ in range(5):
        y = rng.standard_normal(64)
        back = op.apply(op.solve(y))
        assert np.linalg.norm(back - y) <= 1e-12 * np.linalg.norm(y)


def test_apply_eigen_relation_exact():
    dom = Domain1D(1.0, 31)
    op = get_operator(dom)
    for m in (1, 2, 7):
        mode = np.sin(m * math.pi * dom.x)
        lam = disc_eig(dom, m)
        assert np.max(np.abs(op.apply(mode) - (1.0 + lam) * mode)) < 1e-11


def test_solve_eigen_relation():
    dom = Domain1D(1.0, 31)
    op = get_operator(dom)
    for m in (1, 3):
        mode = np.sin(m * math.pi * dom.x)
        lam = disc_eig(dom, m)
        assert np.max(np.abs(op.solve(mode) - mode / (1.0 + lam))) < 1e-13


def test_solve_symmetric(rng):
    dom = Domain1D(1.3, 25)
    op = get_operator(dom)
    f = rng.standard_normal(25)
    g = rng.standard_normal(25)
    assert inner_h(dom, f, op.solve(g)) == pytest.approx(
        inner_h(dom, op.solve(f), g), rel=1e-12)


def test_shift_zero_is_identity(rng):
    dom = Domain1D(1.0, 12)
    s = ShiftedLaplacianSolver(dom, 0.0)
    b = rng.standard_normal(12)
    assert np.allclose(s.solve(b), b, atol=1e-14)
    with pytest.raises(ValueError):
        ShiftedLaplacianSolver(dom, -0.1)


def test_velocity_identity(rng):
    dom = Domain1D(2.0, 40)
    op = get_operator(dom)
    y = rng.standard_normal(40)
    u, ux, uxx = op.velocity(y)
    assert np.array_equal(uxx, u - y)
    assert np.max(np.abs(op.apply(u) - y)) < 1e-11 * max(1.0, np.max(np.abs(y)))


def test_operator_cache():
    a = get_operator(Domain1D(1.0, 10))
    b = get_operator(Domain1D(1.0, 10))
    assert a is b
    assert get_operator(Domain1D(2.0, 10)) is not a


def test_smoothing_contracts(rng):
    """The inverse has spectrum in (0, 1]: solving never grows the h norm."""
    dom = Domain1D(1.0, 30)
    op = get_operator(dom)
    for _ in range(5):
        y = rng.standard_normal(30)
        assert np.linalg.norm(op.solve(y)) <= np.linalg.norm(y) * (1 + 1e-12)
