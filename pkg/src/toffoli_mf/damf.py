"""Dominant-amplitude multifractal analysis on top of the mode decomposition.

For each scale k the local maxima of the mode's envelope amplitude define
windows (midpoint-partitioned, half-open, closed at the series ends), and
the dominant amplitude coefficient of a window is the largest envelope
magnitude attained there at that or any finer scale.  Taking the largest
over finer scales keeps every coefficient away from zero, which is what
makes the negative-order moments usable.

The q-order moments of these coefficients scale with the mode timescales;
the scaling exponents come from a log-log least-squares fit and turn into
the singularity spectrum through the Legendre transform.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator

from .emd import ImfSet, _find_extrema, sift
from .validation import check_series

DEFAULT_Q_MIN = -5.0
DEFAULT_Q_MAX = 5.0
DEFAULT_Q_STEP = 0.5
DEFAULT_K_MIN = 2
DEFAULT_K_MAX = 6

# Scales with fewer dominant amplitudes than this carry meaningless
# extreme moments and are excluded from the scaling fit.
MIN_COEFFICIENTS_PER_SCALE = 4


def integrated_path(f) -> np.ndarray:
    """Cumulative sum of the mean-removed series; ends at zero by construction."""
    f = check_series(f, name="series")
    return np.cumsum(f - f.mean())


@dataclass
class DominantCoefficients:
    """Per-scale dominant amplitude coefficients and their window anchors."""

    values: list  # per scale: array of coefficients, all > 0 for usable data
    positions: list  # per scale: sample index of each envelope maximum

    @property
    def n_scales(self):
        return len(self.values)

    @property
    def counts(self):
        return np.array([v.size for v in self.values])


@dataclass
class ScalingFit:
    """Structure functions S_k(q) (kept in the log domain) and their scaling fit."""

    q: np.ndarray
    log_s: np.ndarray  # shape (n_scales, n_q)
    counts: np.ndarray
    zeta: np.ndarray = None
    r_squared: np.ndarray = None
    fit_range: tuple = None
    timescales: np.ndarray = None

    @property
    def s(self):
        return np.exp(self.log_s)


@dataclass
class SingularitySpectrum:
    """Sampled singularity spectrum with its summary attributes."""

    q: np.ndarray
    zeta: np.ndarray
    alpha: np.ndarray
    f_alpha: np.ndarray
    width: float
    alpha_at_peak: float
    r_squared: np.ndarray = None

    def to_json_dict(self):
        return {
            "q": self.q.tolist(),
            "zeta": self.zeta.tolist(),
            "r_squared": None if self.r_squared is None else self.r_squared.tolist(),
            "alpha": self.alpha.tolist(),
            "f_alpha": self.f_alpha.tolist(),
            "width": self.width,
            "alpha_at_peak": self.alpha_at_peak,
        }


def dominant_amplitudes(imf_set: ImfSet) -> DominantCoefficients:
    """Dominant amplitude coefficients for every usable scale.

    Scales are processed fastest first; the first scale whose envelope has
    no local maxima ends the usable range.
    """
    if imf_set.n_imfs == 0:
        raise ValueError("no intrinsic modes to analyze (input has no oscillation)")
    values, positions = [], []
    running_max = None
    for k, env in enumerate(imf_set.envelopes):
        env = np.abs(env)
        running_max = env if running_max is None else np.maximum(running_max, env)
        maxima, _ = _find_extrema(env)
        if maxima.size == 0:
            if k == 0:
                raise ValueError("scale 1 is unusable: envelope has no local maxima")
            break
        starts = np.empty(maxima.size, dtype=np.intp)
        starts[0] = 0
        starts[1:] = (maxima[:-1] + maxima[1:] + 1) // 2
        values.append(np.maximum.reduceat(running_max, starts))
        positions.append(maxima)
    return DominantCoefficients(values=values, positions=positions)


def structure_functions(v: DominantCoefficients, q_grid) -> ScalingFit:
    """q-order moments S_k(q) of the dominant amplitudes, per scale.

    Computed in the log domain so extreme q stay inside the float range.
    """
    q = np.asarray(q_grid, dtype=float)
    if q.ndim != 1 or q.size == 0:
        raise ValueError("q_grid must be a nonempty 1-d array")
    rows = []
    for k, vk in enumerate(v.values):
        if np.any(vk <= 0):
            raise ValueError(
                f"scale {k + 1} has nonpositive dominant amplitudes; "
                "negative-order moments would diverge"
            )
        log_vk = np.log(vk)
        rows.append(logsumexp(q[:, None] * log_vk[None, :], axis=1) - np.log(vk.size))
    return ScalingFit(q=q, log_s=np.vstack(rows), counts=v.counts)


def fit_zeta(
    fit: ScalingFit,
    timescales,
    k_min: int = DEFAULT_K_MIN,
    k_max: int = DEFAULT_K_MAX,
) -> ScalingFit:
    """Least-squares scaling exponents of log S_k(q) against log timescales.

    Scales are numbered from 1 (fastest mode).  Scales inside the range
    with fewer than MIN_COEFFICIENTS_PER_SCALE coefficients are dropped
    with a warning; at least three scales must remain.
    """
    if k_min < 1:
        raise ValueError("k_min must be >= 1")
    if k_max > fit.log_s.shape[0]:
        raise ValueError(
            f"fit range needs scale {k_max} but only "
            f"{fit.log_s.shape[0]} scales are usable"
        )
    timescales = np.asarray(timescales, dtype=float)
    idx = np.arange(k_min - 1, k_max)
    thin = idx[fit.counts[idx] < MIN_COEFFICIENTS_PER_SCALE]
    if thin.size:
        warnings.warn(
            "excluding scales with too few dominant amplitudes: "
            + ", ".join(f"k={i + 1} (n={fit.counts[i]})" for i in thin),
            stacklevel=2,
        )
        idx = idx[fit.counts[idx] >= MIN_COEFFICIENTS_PER_SCALE]
    if idx.size < 3:
        raise ValueError(f"need at least 3 scales in the fit range, have {idx.size}")

    x = np.log(timescales[idx])
    design = np.column_stack([x, np.ones_like(x)])
    y = fit.log_s[idx]
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    zeta = coef[0]
    pred = design @ coef
    ss_res = np.sum((y - pred) ** 2, axis=0)
    ss_tot = np.sum((y - y.mean(axis=0)) ** 2, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        r2 = np.where(ss_tot > 0, 1.0 - ss_res / ss_tot, 1.0)
    return replace(
        fit, zeta=zeta, r_squared=r2, fit_range=(k_min, k_max), timescales=timescales
    )


def legendre(fit: ScalingFit) -> SingularitySpectrum:
    """Legendre transform of the fitted scaling exponents.

    alpha(q) = d zeta / dq by central differences (one-sided at the grid
    ends), f(alpha) = alpha*q - zeta + 1, and the width is the spread of
    alpha over the grid.
    """
    if fit.zeta is None:
        raise ValueError("scaling exponents not fitted yet")
    dq = np.diff(fit.q)
    if dq.size == 0 or np.max(np.abs(dq - dq[0])) > 1e-12 * max(abs(dq[0]), 1e-300):
        raise ValueError("Legendre transform requires a uniform q grid")
    # Second-order one-sided stencils at the ends keep quadratic
    # exponents exact over the whole grid.
    alpha = np.gradient(fit.zeta, dq[0], edge_order=2)
    f_alpha = alpha * fit.q - fit.zeta + 1.0
    return SingularitySpectrum(
        q=fit.q,
        zeta=fit.zeta,
        alpha=alpha,
        f_alpha=f_alpha,
        width=float(alpha.max() - alpha.min()),
        alpha_at_peak=float(alpha[np.argmax(f_alpha)]),
        r_squared=fit.r_squared,
    )


def q_grid(q_min=DEFAULT_Q_MIN, q_max=DEFAULT_Q_MAX, q_step=DEFAULT_Q_STEP):
    if not q_step > 0 or q_max <= q_min:
        raise ValueError("need q_step > 0 and q_max > q_min")
    return q_min + q_step * np.arange(int(round((q_max - q_min) / q_step)) + 1)


def analyze(
    series,
    q_min=DEFAULT_Q_MIN,
    q_max=DEFAULT_Q_MAX,
    q_step=DEFAULT_Q_STEP,
    k_min=DEFAULT_K_MIN,
    k_max=DEFAULT_K_MAX,
    integrate=True,
    min_length=1024,
    **emd_params,
) -> SingularitySpectrum:
    """Full analysis chain for one series.

    integrated path (optional) -> mode decomposition -> dominant
    amplitudes -> structure functions -> scaling fit -> Legendre
    transform.  Errors from any stage are re-raised with the stage named.
    """
    x = check_series(series, name="series", min_length=min_length)
    if integrate:
        x = integrated_path(x)

    stage = "decomposition"
    try:
        imf_set = sift(x, **emd_params)
        stage = "dominant amplitudes"
        coeffs = dominant_amplitudes(imf_set)
        stage = "structure functions"
        fit = structure_functions(coeffs, q_grid(q_min, q_max, q_step))
        stage = "scaling fit"
        fit = fit_zeta(fit, imf_set.timescales[: fit.log_s.shape[0]], k_min, k_max)
        stage = "legendre transform"
        return legendre(fit)
    except ValueError as exc:
        raise ValueError(f"{stage}: {exc}") from exc


class MultifractalAnalyzer(BaseEstimator):
    """Estimator interface to the dominant-amplitude multifractal analysis.

    Parameters mirror :func:`analyze`; ``fit`` runs the chain on a single
    series and exposes the results as fitted attributes:

    ``spectrum_`` (the full :class:`SingularitySpectrum`), ``width_``
    (the multifractal width), ``q_``, ``zeta_``, ``r_squared_``,
    ``alpha_``, ``f_alpha_`` and ``alpha_at_peak_``.
    """

    def __init__(
        self,
        q_min=DEFAULT_Q_MIN,
        q_max=DEFAULT_Q_MAX,
        q_step=DEFAULT_Q_STEP,
        k_min=DEFAULT_K_MIN,
        k_max=DEFAULT_K_MAX,
        integrate=True,
        min_length=1024,
        theta1=0.05,
        theta2=0.5,
        tolerance=0.05,
        max_sift_iterations=100,
        nbsym=2,
        max_imfs=None,
    ):
        self.q_min = q_min
        self.q_max = q_max
        self.q_step = q_step
        self.k_min = k_min
        self.k_max = k_max
        self.integrate = integrate
        self.min_length = min_length
        self.theta1 = theta1
        self.theta2 = theta2
        self.tolerance = tolerance
        self.max_sift_iterations = max_sift_iterations
        self.nbsym = nbsym
        self.max_imfs = max_imfs

    def fit(self, X, y=None):
        spectrum = analyze(
            X,
            q_min=self.q_min,
            q_max=self.q_max,
            q_step=self.q_step,
            k_min=self.k_min,
            k_max=self.k_max,
            integrate=self.integrate,
            min_length=self.min_length,
            theta1=self.theta1,
            theta2=self.theta2,
            tolerance=self.tolerance,
            max_sift_iterations=self.max_sift_iterations,
            nbsym=self.nbsym,
            max_imfs=self.max_imfs,
        )
        self.spectrum_ = spectrum
        self.q_ = spectrum.q
        self.zeta_ = spectrum.zeta
        self.r_squared_ = spectrum.r_squared
        self.alpha_ = spectrum.alpha
        self.f_alpha_ = spectrum.f_alpha
        self.width_ = spectrum.width
        self.alpha_at_peak_ = spectrum.alpha_at_peak
        return self
