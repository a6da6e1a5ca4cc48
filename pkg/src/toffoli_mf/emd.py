"""Empirical mode decomposition with per-mode envelope amplitudes.

Sifting follows the standard recipe: cubic-spline upper/lower envelopes
through the local maxima/minima, extended at both ends by mirroring two
extrema; the inner loop stops on the three-threshold criterion
(theta1, theta2, tolerance fraction) with a hard iteration cap, and the
outer loop stops once the residual is monotonic or has fewer than three
extrema.  The envelope amplitude of a finished mode is recomputed from
the mode's own extrema, so it is available without a Hilbert transform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline, interp1d
from sklearn.base import BaseEstimator, TransformerMixin

from .validation import check_series


def _find_extrema(x):
    """Indices of local maxima and minima; plateaus count once, at their midpoint."""
    d = np.diff(x)
    nz = np.flatnonzero(d)
    if nz.size < 2:
        empty = np.empty(0, dtype=np.intp)
        return empty, empty
    s = np.sign(d[nz])
    flips = np.flatnonzero(s[1:] != s[:-1])
    idx = (nz[flips] + 1 + nz[flips + 1]) // 2
    return idx[s[flips] > 0], idx[s[flips] < 0]


def _count_zero_crossings(x):
    return int(np.count_nonzero(np.signbit(x[:-1]) != np.signbit(x[1:])))


def _mirrored_knots(x, max_idx, min_idx, nbsym):
    """Extrema extended by mirroring nbsym of them beyond each end.

    Returns (tmax, zmax, tmin, zmin) knot positions/values whose ranges
    cover [0, len(x) - 1], so the envelope splines never extrapolate.
    """
    n = x.size
    end_max, end_min = len(max_idx), len(min_idx)

    # Left end: reflect about the first extremum, or about the first
    # sample when it lies outside the first envelope excursion.
    if max_idx[0] < min_idx[0]:
        if x[0] > x[min_idx[0]]:
            lmax = max_idx[1 : min(end_max, nbsym + 1)][::-1]
            lmin = min_idx[0 : min(end_min, nbsym)][::-1]
            lsym = max_idx[0]
        else:
            lmax = max_idx[0 : min(end_max, nbsym)][::-1]
            lmin = np.append(min_idx[0 : min(end_min, nbsym - 1)][::-1], 0)
            lsym = 0
    else:
        if x[0] < x[max_idx[0]]:
            lmax = max_idx[0 : min(end_max, nbsym)][::-1]
            lmin = min_idx[1 : min(end_min, nbsym + 1)][::-1]
            lsym = min_idx[0]
        else:
            lmax = np.append(max_idx[0 : min(end_max, nbsym - 1)][::-1], 0)
            lmin = min_idx[0 : min(end_min, nbsym)][::-1]
            lsym = 0

    # Right end, mirrored logic.
    if max_idx[-1] < min_idx[-1]:
        if x[-1] < x[max_idx[-1]]:
            rmax = max_idx[max(end_max - nbsym, 0) :][::-1]
            rmin = min_idx[max(end_min - nbsym - 1, 0) : -1][::-1]
            rsym = min_idx[-1]
        else:
            rmax = np.append(max_idx[max(end_max - nbsym + 1, 0) :], n - 1)[::-1]
            rmin = min_idx[max(end_min - nbsym, 0) :][::-1]
            rsym = n - 1
    else:
        if x[-1] > x[min_idx[-1]]:
            rmax = max_idx[max(end_max - nbsym - 1, 0) : -1][::-1]
            rmin = min_idx[max(end_min - nbsym, 0) :][::-1]
            rsym = max_idx[-1]
        else:
            rmax = max_idx[max(end_max - nbsym, 0) :][::-1]
            rmin = np.append(min_idx[max(end_min - nbsym + 1, 0) :], n - 1)[::-1]
            rsym = n - 1

    if not lmin.size:
        lmin = min_idx[::-1]
    if not rmin.size:
        rmin = min_idx[::-1]
    if not lmax.size:
        lmax = max_idx[::-1]
    if not rmax.size:
        rmax = max_idx[::-1]

    tlmin, tlmax = 2 * lsym - lmin, 2 * lsym - lmax
    trmin, trmax = 2 * rsym - rmin, 2 * rsym - rmax

    # If the reflection failed to clear an end, reflect about the end sample.
    if tlmin[0] > 0 or tlmax[0] > 0:
        if lsym == max_idx[0]:
            lmax = max_idx[0 : min(end_max, nbsym)][::-1]
        else:
            lmin = min_idx[0 : min(end_min, nbsym)][::-1]
        lsym = 0
        tlmin, tlmax = -lmin, -lmax
    if trmin[-1] < n - 1 or trmax[-1] < n - 1:
        if rsym == max_idx[-1]:
            rmax = max_idx[max(end_max - nbsym, 0) :][::-1]
        else:
            rmin = min_idx[max(end_min - nbsym, 0) :][::-1]
        rsym = n - 1
        trmin, trmax = 2 * rsym - rmin, 2 * rsym - rmax

    tmax = np.concatenate([tlmax, max_idx, trmax]).astype(float)
    zmax = np.concatenate([x[lmax], x[max_idx], x[rmax]])
    tmin = np.concatenate([tlmin, min_idx, trmin]).astype(float)
    zmin = np.concatenate([x[lmin], x[min_idx], x[rmin]])

    def dedup(t, z):
        keep = np.concatenate([[True], np.diff(t) > 0])
        return t[keep], z[keep]

    tmax, zmax = dedup(tmax, zmax)
    tmin, zmin = dedup(tmin, zmin)
    return tmax, zmax, tmin, zmin


def _spline(t_knots, z_knots, t_eval):
    if t_knots.size >= 4:
        return CubicSpline(t_knots, z_knots)(t_eval)
    if t_knots.size == 3:
        return interp1d(t_knots, z_knots, kind="quadratic")(t_eval)
    return np.interp(t_eval, t_knots, z_knots)


def _envelopes(x, max_idx, min_idx, nbsym):
    tmax, zmax, tmin, zmin = _mirrored_knots(x, max_idx, min_idx, nbsym)
    t = np.arange(x.size, dtype=float)
    return _spline(tmax, zmax, t), _spline(tmin, zmin, t)


def _extract_imf(residual, theta1, theta2, tolerance, max_sift_iterations, nbsym):
    """Sift one mode out of the residual; returns None when it cannot oscillate."""
    cur = residual.copy()
    for iteration in range(max_sift_iterations):
        max_idx, min_idx = _find_extrema(cur)
        if len(max_idx) < 1 or len(min_idx) < 1 or len(max_idx) + len(min_idx) < 3:
            return None if iteration == 0 else cur
        upper, lower = _envelopes(cur, max_idx, min_idx, nbsym)
        mean = 0.5 * (upper + lower)
        amp = 0.5 * (upper - lower)
        with np.errstate(divide="ignore", invalid="ignore"):
            sx = np.abs(mean) / np.abs(amp)
        sx = np.where(np.isfinite(sx), sx, np.inf)
        if np.mean(sx > theta1) <= tolerance and np.max(sx) <= theta2:
            return cur
        cur = cur - mean
    return cur


@dataclass
class ImfSet:
    """Ordered intrinsic mode functions with envelope amplitudes.

    ``imfs[k]`` is the k-th mode (fastest first), ``envelopes[k]`` its
    envelope amplitude a_k(t) >= 0, and ``timescales[k]`` the mean
    timescale 2n / (zero crossings of the mode), in samples.  The modes
    plus the residual reconstruct the input.
    """

    imfs: list
    envelopes: list
    residual: np.ndarray
    timescales: np.ndarray

    @property
    def n_imfs(self):
        return len(self.imfs)


def sift(
    x,
    theta1: float = 0.05,
    theta2: float = 0.5,
    tolerance: float = 0.05,
    max_sift_iterations: int = 100,
    nbsym: int = 2,
    max_imfs: int = None,
) -> ImfSet:
    """Decompose a series into intrinsic mode functions plus a trend.

    Parameters
    ----------
    x : array-like, shape (n,)
        Input series, n >= 8.
    theta1, theta2, tolerance : float
        Three-threshold sifting stop: the envelope-mean to amplitude
        ratio must stay below theta1 on at least (1 - tolerance) of the
        samples and below theta2 everywhere.
    max_sift_iterations : int
        Hard cap on inner sift iterations per mode.
    nbsym : int
        Number of extrema mirrored past each boundary before spline fitting.
    max_imfs : int, optional
        Cap on the number of extracted modes (None decomposes fully).

    Returns
    -------
    ImfSet
        A series with no oscillation (e.g. a monotonic ramp) yields zero
        modes and the input itself as residual.
    """
    x = check_series(x, name="input series", min_length=8)
    residual = x.copy()
    imfs, envelopes, timescales = [], [], []
    n = x.size

    while max_imfs is None or len(imfs) < max_imfs:
        max_idx, min_idx = _find_extrema(residual)
        if len(max_idx) + len(min_idx) < 3:
            break
        imf = _extract_imf(
            residual, theta1, theta2, tolerance, max_sift_iterations, nbsym
        )
        if imf is None:
            break
        max_idx, min_idx = _find_extrema(imf)
        if len(max_idx) < 1 or len(min_idx) < 1:
            break
        upper, lower = _envelopes(imf, max_idx, min_idx, nbsym)
        imfs.append(imf)
        # Spline envelopes can cross briefly where the mode is tiny;
        # the amplitude is floored at zero.
        envelopes.append(np.maximum(0.5 * (upper - lower), 0.0))
        timescales.append(2.0 * n / max(_count_zero_crossings(imf), 1))
        residual = residual - imf

    recon = residual if not imfs else np.sum(imfs, axis=0) + residual
    scale = max(np.max(np.abs(x)), 1e-300)
    if np.max(np.abs(recon - x)) > 1e-10 * scale:
        raise AssertionError("decomposition failed to reconstruct the input")

    return ImfSet(
        imfs=imfs,
        envelopes=envelopes,
        residual=residual,
        timescales=np.asarray(timescales),
    )


class EmpiricalModeDecomposition(BaseEstimator, TransformerMixin):
    """Sklearn-style transformer around :func:`sift`.

    The decomposition is stateless: ``transform`` decomposes the series it
    is given, while ``fit`` stores the decomposition of the fitted series
    in ``imfs_``, ``envelopes_``, ``residual_`` and ``timescales_``.

    ``transform`` returns an array of shape (n_samples, n_imfs + 1) whose
    columns are the modes, fastest first, followed by the residual, so
    that rows sum back to the input series.
    """

    def __init__(
        self,
        theta1=0.05,
        theta2=0.5,
        tolerance=0.05,
        max_sift_iterations=100,
        nbsym=2,
        max_imfs=None,
    ):
        self.theta1 = theta1
        self.theta2 = theta2
        self.tolerance = tolerance
        self.max_sift_iterations = max_sift_iterations
        self.nbsym = nbsym
        self.max_imfs = max_imfs

    def _sift(self, x):
        return sift(
            x,
            theta1=self.theta1,
            theta2=self.theta2,
            tolerance=self.tolerance,
            max_sift_iterations=self.max_sift_iterations,
            nbsym=self.nbsym,
            max_imfs=self.max_imfs,
        )

    def fit(self, X, y=None):
        result = self._sift(X)
        self.imfs_ = result.imfs
        self.envelopes_ = result.envelopes
        self.residual_ = result.residual
        self.timescales_ = result.timescales
        self.n_imfs_ = result.n_imfs
        return self

    def transform(self, X):
        result = self._sift(X)
        return np.column_stack(result.imfs + [result.residual])

    def fit_transform(self, X, y=None):
        self.fit(X)
        return np.column_stack(self.imfs_ + [self.residual_])
