"""Shared synthetic-spectrum generators for analysis and acceptance tests."""

import numpy as np

from tweezersim.protocols import SidebandSpectrum


def gaussian_model(f, a_blue, a_red, center, width, offset):
    g = lambda mu: np.exp(-((f - mu) ** 2) / (2 * width**2))
    return a_blue * g(center) + a_red * g(-center) + offset


def make_gaussian_spectrum(
    nbar,
    rng,
    shots_per_point=300,
    a_blue=0.9,
    center=35e3,
    width=2e3,
    offset=0.0,
    n_side=15,
    span=7e3,
):
    """Matched-model synthetic sideband spectrum with binomial noise.

    The true cooling-peak height follows the thermal ratio
    a_red = q * a_blue with q = nbar / (nbar + 1).
    """
    q = nbar / (nbar + 1.0)
    a_red = q * a_blue
    side = np.linspace(center - span, center + span, n_side)
    f = np.concatenate([-side[::-1], side])
    p_true = np.clip(gaussian_model(f, a_blue, a_red, center, width, offset), 0.0, 1.0)
    counts = rng.binomial(shots_per_point, p_true)
    p = counts / shots_per_point
    stderr = np.sqrt(np.clip(p * (1 - p), 1e-12, None) / shots_per_point)
    return SidebandSpectrum(
        detuning_hz=f,
        p_exc=p,
        stderr=stderr,
        shots=np.full(f.size, shots_per_point),
    )
