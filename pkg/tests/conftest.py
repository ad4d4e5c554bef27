import numpy as np
import pytest


def bin_averaged(fn, centers, width, k=9):
    """Average a model over each histogram bin (midpoint rule, k points).

    Histogram counts integrate over bins, so cusped models (the zero-delay
    coalescence dip) must be bin-averaged before comparing.
    """
    offsets = (np.arange(k) + 0.5) / k - 0.5
    total = np.zeros_like(np.asarray(centers, dtype=float))
    for o in offsets:
        total = total + fn(centers + o * width)
    return total / k


def fraction_within_3se(hist, expected_values, min_expected=10.0):
    """Scale-fitted per-bin comparison; returns (fraction, n_bins_used)."""
    data = hist.values.astype(float)
    model = np.asarray(expected_values, dtype=float)
    scale = data.sum() / model.sum()
    expected = scale * model
    use = expected > min_expected
    z = (data[use] - expected[use]) / np.sqrt(expected[use])
    return float(np.mean(np.abs(z) <= 3.0)), int(use.sum())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
