from __future__ import annotations

import numpy as np
import pytest

from sleagg.curves import Curve


def make_polyline(rng: np.random.Generator, n_min: int = 4, n_max: int = 24,
                  scale: float = 1.0, t_dur: float | None = None) -> Curve:
    """Random finite-duration polyline for property tests."""
    n = int(rng.integers(n_min, n_max + 1))
    steps = (rng.standard_normal(n - 1) + 1j * rng.standard_normal(n - 1)) * scale / np.sqrt(n)
    points = np.concatenate([[0.0 + 0.0j], np.cumsum(steps)])
    points += rng.standard_normal() + 1j * rng.standard_normal()
    gaps = rng.random(n - 1) + 0.05
    times = np.concatenate([[0.0], np.cumsum(gaps)])
    if t_dur is not None:
        times *= t_dur / times[-1]
    return Curve(times=times, points=points)


def segment(z0: complex, z1: complex, t_dur: float, n: int = 2) -> Curve:
    ts = np.linspace(0.0, t_dur, n)
    fr = ts / t_dur if t_dur > 0 else np.zeros(n)
    return Curve(times=ts, points=z0 + fr * (z1 - z0))


@pytest.fixture
def rng():
    return np.random.default_rng(90210)
