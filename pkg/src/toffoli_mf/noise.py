"""Seed-deterministic 1/f and white Gaussian noise, and noisy coupling series.

Pink noise is synthesized in the frequency domain: independent complex
Gaussian bins with amplitude proportional to f**(-1/2) (zero DC), inverse
real FFT, then an exact affine renormalization to sample mean 0 and sample
standard deviation sigma.  One sample corresponds to one gate realization;
the coupling is constant within a single gate.
"""

from __future__ import annotations

import numpy as np

from .validation import check_power_of_two


def _renormalized(x: np.ndarray, sigma: float) -> np.ndarray:
    x = x - x.mean()
    return x * (sigma / x.std())


def _check_args(n, sigma):
    check_power_of_two(n, name="n")
    if not sigma > 0:
        raise ValueError("sigma must be positive")


def pink_noise(n: int, sigma: float, seed: int) -> np.ndarray:
    """1/f-noise realization of length n (a power of two).

    The returned array has sample mean exactly 0 and sample standard
    deviation exactly sigma (up to float rounding), so the sigma axis of
    downstream sweeps refers to the realized deviation.
    """
    _check_args(n, sigma)
    rng = np.random.default_rng(seed)
    spectrum = np.zeros(n // 2 + 1, dtype=complex)
    bins = np.arange(1, n // 2 + 1, dtype=float)
    amplitude = bins ** -0.5
    spectrum[1:] = amplitude * (
        rng.standard_normal(n // 2) + 1j * rng.standard_normal(n // 2)
    )
    spectrum[-1] = spectrum[-1].real  # Nyquist bin of a real signal
    x = np.fft.irfft(spectrum, n)
    return _renormalized(x, sigma)


def white_noise(n: int, sigma: float, seed: int) -> np.ndarray:
    """I.i.d. Gaussian noise of length n, renormalized exactly like pink_noise."""
    _check_args(n, sigma)
    rng = np.random.default_rng(seed)
    return _renormalized(rng.standard_normal(n), sigma)


NOISE_KINDS = {"pink": pink_noise, "white": white_noise}


def coupling_series(eps: np.ndarray, jbar: float = 1.0) -> np.ndarray:
    """Noisy coupling J(t) = jbar * (1 + eps(t)).

    Negative couplings at large sigma are allowed; they remain physically
    meaningful in the XY Hamiltonian.
    """
    return jbar * (1.0 + np.asarray(eps, dtype=float))
