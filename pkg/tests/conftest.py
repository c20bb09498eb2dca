import numpy as np
import pytest

from vastvol.tickdata import TickPanel, TickSeries


@pytest.fixture
def small_panel():
    a = TickSeries("A", np.array([1.0, 3.0, 5.0]), np.array([0.0, 0.01, 0.02]))
    b = TickSeries("B", np.array([2.0, 4.0, 6.0]), np.array([0.1, 0.11, 0.12]))
    return TickPanel(10.0, (a, b))


def random_panel(rng, p, window=100.0, min_ticks=5, max_ticks=60):
    """Poisson-ish random panel for property tests."""
    series = []
    for k in range(p):
        n = int(rng.integers(min_ticks, max_ticks + 1))
        times = np.sort(rng.uniform(0.0, window, size=n))
        while len(np.unique(times)) != len(times):
            times = np.sort(rng.uniform(0.0, window, size=n))
        prices = np.cumsum(rng.standard_normal(n)) * 0.01
        series.append(TickSeries(f"S{k}", times, prices))
    return TickPanel(window, tuple(series))
