import math

import numpy as np
import pytest

from mchcontrol.errors import DomainMismatchError
from mchcontrol.grid import (Domain1D, TimeGrid, as_field, as_trajectory,
                             d1, d2, inner_h, norm_h, norm_v, norm_vstar,
                             norm_l2h, norm_ct_h, norm_l2v, norm_wv,
                             wall_slopes, grad_norm_sq,
                             random_smooth_trajectory,
                             measure_embedding_constant)


def disc_eig(domain, m):
    """Exact eigenvalue of -d2 for the m-th Dirichlet sine mode."""
    return (2.0 - 2.0 * math.cos(m * math.pi * domain.h / domain.L)) \
        / domain.h ** 2


def test_domain_geometry():
    dom = Domain1D(2.0, 3)
    assert dom.h == 0.5
    assert np.allclose(dom.x, [0.5, 1.0, 1.5])
    with pytest.raises(ValueError):
        Domain1D(0.0, 16)
    with pytest.raises(ValueError):
        Domain1D(1.0, 2)


def test_time_grid_weights():
    tg = TimeGrid(1.0, 4)
    assert tg.dt == 0.25
    assert np.allclose(tg.t, [0.0, 0.25, 0.5, 0.75, 1.0])
    assert np.allclose(tg.weights, [0.125, 0.25, 0.25, 0.25, 0.125])
    assert tg.weights.sum() == pytest.approx(tg.T)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0)


def test_shape_checks():
    dom = Domain1D(1.0, 8)
    tg = TimeGrid(1.0, 4)
    with pytest.raises(DomainMismatchError):
        as_field(dom, np.zeros(5))
    with pytest.raises(DomainMismatchError):
        as_trajectory(dom, tg, np.zeros((3, 8)))
    assert as_field(dom, np.zeros(8)).shape == (8,)


def test_summation_by_parts(rng):
    dom = Domain1D(1.7, 41)
    f = rng.standard_normal(41)
    g = rng.standard_normal(41)
    # centered d1 with zero extension is exactly antisymmetric
    assert inner_h(dom, d1(dom, f), g) == pytest.approx(
        -inner_h(dom, f, d1(dom, g)), abs=1e-14)
    assert inner_h(dom, d2(dom, f), g) == pytest.approx(
        inner_h(dom, f, d2(dom, g)), abs=1e-13)


def test_d1_d2_accuracy():
    errs1, errs2 = [], []
    for n in (32, 64, 128):
        dom = Domain1D(2.0, n)
        f = np.sin(math.pi * dom.x / 2.0)
        df = (math.pi / 2.0) * np.cos(math.pi * dom.x / 2.0)
        d2f = -(math.pi / 2.0) ** 2 * f
        errs1.append(np.max(np.abs(d1(dom, f) - df)))
        errs2.append(np.max(np.abs(d2(dom, f) - d2f)))
    for errs in (errs1, errs2):
        order = math.log2(errs[0] / errs[2]) / 2.0
        assert order > 1.9


def test_d2_eigenmode_exact():
    dom = Domain1D(1.0, 33)
    for m in (1, 2, 5):
        mode = np.sin(m * math.pi * dom.x)
        lam = disc_eig(dom, m)
        assert np.max(np.abs(d2(dom, mode) + lam * mode)) < 1e-11


def test_wall_slopes_exact_for_quadratic():
    dom = Domain1D(2.0, 27)
    f = dom.x * (dom.L - dom.x)
    s0, sL = wall_slopes(dom, f)
    assert s0 == pytest.approx(dom.L, abs=1e-12)
    assert sL == pytest.approx(-dom.L, abs=1e-12)


def test_grad_norm_sq_wall_corrected():
    # integral of (pi/L cos(pi x/L))^2 over (0, L) is (pi/L)^2 L / 2
    errs = []
    for n in (128, 256, 512):
        dom = Domain1D(2.0, n)
        f = np.sin(math.pi * dom.x / dom.L)
        exact = (math.pi / dom.L) ** 2 * dom.L / 2.0
        errs.append(abs(grad_norm_sq(dom, f) - exact))
    order = math.log2(errs[0] / errs[2]) / 2.0
    assert order > 1.9
    # interior-only sum misses the wall density at first order
    dom = Domain1D(2.0, 64)
    f = np.sin(math.pi * dom.x / dom.L)
    interior = dom.h * float(d1(dom, f) @ d1(dom, f))
    exact = (math.pi / dom.L) ** 2 * dom.L / 2.0
    assert abs(interior - exact) > 10.0 * abs(grad_norm_sq(dom, f) - exact)


def test_norm_h_and_inner():
    dom = Domain1D(1.0, 9)
    f = np.ones(9)
    assert norm_h(dom, f) == pytest.approx(math.sqrt(9 * dom.h))
    assert inner_h(dom, f, f) == pytest.approx(9 * dom.h)


def test_vstar_eigenmode_oracle():
    dom = Domain1D(1.5, 47)
    for m in (1, 3):
        mode = np.sin(m * math.pi * dom.x / dom.L)
        lam = disc_eig(dom, m)
        expect = norm_h(dom, mode) / math.sqrt(1.0 + lam)
        assert norm_vstar(dom, mode) == pytest.approx(expect, rel=1e-12)


def test_vstar_below_h(rng):
    dom = Domain1D(1.0, 21)
    for _ in range(5):
        f = rng.standard_normal(21)
        assert norm_vstar(dom, f) <= norm_h(dom, f) * (1.0 + 1e-12)


def test_trajectory_norms(rng):
    dom = Domain1D(1.0, 16)
    tg = TimeGrid(0.7, 9)
    f = rng.standard_normal(16)
    Y = np.tile(f, (10, 1))
    # constant-in-time: no quotient contribution, plain L2(V) value
    assert norm_wv(dom, tg, Y) == pytest.approx(norm_l2v(dom, tg, Y), rel=1e-13)
    assert norm_ct_h(dom, tg, Y) == pytest.approx(norm_h(dom, f), rel=1e-13)
    assert norm_l2h(dom, tg, Y) == pytest.approx(
        math.sqrt(tg.T) * norm_h(dom, f), rel=1e-12)


def test_norm_v_pythagoras(rng):
    dom = Domain1D(1.0, 15)
    f = rng.standard_normal(15)
    expect = math.sqrt(norm_h(dom, f) ** 2 + norm_h(dom, d1(dom, f)) ** 2)
    assert norm_v(dom, f) == pytest.approx(expect, rel=1e-14)


def test_embedding_constant_deterministic():
    dom = Domain1D(1.0, 24)
    tg = TimeGrid(0.5, 20)
    a = measure_embedding_constant(dom, tg, np.random.default_rng(7), 8)
    b = measure_embedding_constant(dom, tg, np.random.default_rng(7), 8)
    assert a == b
    assert a > 0.0
    # the estimate dominates the sampled trajectories by construction
    Y = random_smooth_trajectory(dom, tg, np.random.default_rng(7))
    assert norm_ct_h(dom, tg, Y) <= a * norm_wv(dom, tg, Y) * (1.0 + 1e-12)
