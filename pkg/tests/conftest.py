"""Shared fixtures: a small solver setup and the twin-recovery problem."""

import numpy as np
import pytest

from mchcontrol.grid import Domain1D, TimeGrid
from mchcontrol.forward import (ModelParams, ControlWindow, solve_forward,
                                apply_B)
from mchcontrol.control import TrackingProblem


def bump_control(window: ControlWindow, amplitude: float = 0.8) -> np.ndarray:
    """Smooth space-time bump supported inside the window."""
    dom, tg = window.domain, window.tg
    a, b, t0, t1 = window.a, window.b, window.t0, window.t1
    xs = np.clip((dom.x - a) / (b - a), 0.0, 1.0)
    ts = np.clip((tg.t - t0) / (t1 - t0), 0.0, 1.0)
    prof = np.outer(np.sin(np.pi * ts) ** 2, np.sin(np.pi * xs) ** 2)
    return amplitude * prof * window.mask


def twin_problem(n: int = 48, n_steps: int = 240, epsilon: float = 0.08,
                 k: float = 0.6, delta: float = 1e-4,
                 amplitude: float = 0.8):
    """Tracking problem whose target is generated by a known bump control.

    The window covers the middle half of the cylinder in both space and
    time; returns (problem, omega_true).
    """
    dom = Domain1D(2.0, n)
    tg = TimeGrid(0.8, n_steps)
    p = ModelParams(epsilon=epsilon, k=k)
    window = ControlWindow(dom, tg, 0.5, 1.5, 0.2, 0.6)
    y0 = 0.35 * np.sin(np.pi * dom.x / 2.0) \
        + 0.15 * np.sin(2.0 * np.pi * dom.x / 2.0)
    omega_true = bump_control(window, amplitude)
    z_d = solve_forward(dom, tg, p, y0, apply_B(window, omega_true)).y
    return TrackingProblem(dom, tg, p, window, y0, z_d, delta), omega_true


@pytest.fixture
def rng():
    return np.random.default_rng(20260818)


@pytest.fixture(scope="session")
def small_setup():
    """Modest forward setup shared by read-only tests."""
    dom = Domain1D(2.0, 32)
    tg = TimeGrid(0.5, 80)
    p = ModelParams(epsilon=0.1, k=0.4)
    window = ControlWindow(dom, tg, 0.5, 1.5, 0.125, 0.375)
    y0 = 0.3 * np.sin(np.pi * dom.x / 2.0) \
        + 0.1 * np.sin(3.0 * np.pi * dom.x / 2.0)
    return dom, tg, p, window, y0


@pytest.fixture(scope="session")
def twin48():
    return twin_problem()
