import numpy as np
import pytest

from toffoli_mf.damf import (
    DominantCoefficients,
    MultifractalAnalyzer,
    ScalingFit,
    analyze,
    dominant_amplitudes,
    fit_zeta,
    integrated_path,
    legendre,
    q_grid,
    structure_functions,
)
from toffoli_mf.emd import ImfSet, sift
from toffoli_mf.noise import pink_noise, white_noise


def spectral_gaussian(n, psd_exponent, seed):
    """Gaussian series with periodogram ~ f**(-psd_exponent); fGn oracle.

    H = (1 + psd_exponent) / 2 for fractional Gaussian noise, so
    psd_exponent = 0 is ordinary white noise (H = 0.5).
    """
    rng = np.random.default_rng(seed)
    spec = np.zeros(n // 2 + 1, dtype=complex)
    k = np.arange(1, n // 2 + 1, dtype=float)
    spec[1:] = k ** (-psd_exponent / 2.0) * (
        rng.standard_normal(n // 2) + 1j * rng.standard_normal(n // 2)
    )
    x = np.fft.irfft(spec, n)
    return x / x.std()


def lognormal_cascade_walk(n, lam2, seed):
    """Multifractal random walk: increments eps * exp(omega) with
    log-correlated Gaussian omega (circulant embedding), giving the
    quadratic exponents zeta(q) = q/2 - (lam2/2) (q^2 - q)."""
    rng = np.random.default_rng(seed)
    tau = np.arange(n)
    tau_c = np.minimum(tau, n - tau)
    cov = lam2 * np.log(n / np.maximum(tau_c, 1.0))
    cov[0] = lam2 * np.log(n)
    eigenvalues = np.maximum(np.fft.rfft(cov).real, 0.0)
    z = rng.standard_normal(n // 2 + 1) + 1j * rng.standard_normal(n // 2 + 1)
    spec = np.sqrt(eigenvalues * n / 2.0) * z
    spec[0] = np.sqrt(eigenvalues[0] * n) * z[0].real
    spec[-1] = np.sqrt(eigenvalues[-1] * n) * z[-1].real
    omega = np.fft.irfft(spec, n)
    return np.cumsum(rng.standard_normal(n) * np.exp(omega))


def synthetic_imf_set(envelopes, timescales=None):
    """ImfSet carrying only envelopes, for dominant-amplitude unit tests."""
    n = len(envelopes[0])
    k = len(envelopes)
    return ImfSet(
        imfs=[np.zeros(n) for _ in range(k)],
        envelopes=[np.asarray(e, dtype=float) for e in envelopes],
        residual=np.zeros(n),
        timescales=np.asarray(timescales if timescales is not None
                              else 2.0 ** np.arange(1, k + 1)),
    )


class TestIntegratedPath:
    def test_constant_series_gives_zeros(self):
        assert np.array_equal(integrated_path(np.full(16, 3.3)), np.zeros(16))

    def test_hand_computed_two_samples(self):
        assert np.allclose(integrated_path(np.array([1.0, 0.0])), [0.5, 0.0])

    def test_ends_at_zero(self):
        x = pink_noise(2 ** 12, 1.0, seed=9)
        path = integrated_path(x)
        assert abs(path[-1]) <= 1e-9


class TestDominantAmplitudes:
    def test_single_scale_equals_envelope_maxima(self):
        t = np.arange(256)
        env = 2.0 + np.cos(2 * np.pi * t / 32)  # maxima interior, value 3
        v = dominant_amplitudes(synthetic_imf_set([env]))
        assert v.n_scales == 1
        assert np.allclose(v.values[0], 3.0)
        assert v.values[0].size == v.positions[0].size

    def test_supremum_takes_finer_scale(self):
        t = np.arange(256)
        fine = 2.0 + np.cos(2 * np.pi * t / 16)   # peaks at 3
        coarse = 1.0 + 0.5 * np.cos(2 * np.pi * t / 64)  # peaks at 1.5
        v = dominant_amplitudes(synthetic_imf_set([fine, coarse]))
        # every coarse window contains a larger fine-scale maximum
        assert np.allclose(v.values[1], 3.0)

    def test_pink_noise_counts_decrease(self):
        x = pink_noise(2 ** 13, 1.0, seed=2)
        imf_set = sift(x)
        v = dominant_amplitudes(imf_set)
        assert all(val.min() > 0 for val in v.values)
        counts = v.counts
        assert np.all(np.diff(counts.astype(float)) < 0)

    def test_no_modes_raises(self):
        empty = ImfSet(imfs=[], envelopes=[], residual=np.zeros(16),
                       timescales=np.array([]))
        with pytest.raises(ValueError, match="no intrinsic modes"):
            dominant_amplitudes(empty)


class TestStructureFunctions:
    def test_constant_coefficients_power_scaling(self):
        v = DominantCoefficients(values=[np.full(10, 2.0)], positions=[np.arange(10)])
        q = q_grid()
        fit = structure_functions(v, q)
        assert np.allclose(fit.s[0], 2.0 ** q, rtol=1e-12)

    def test_zeroth_moment_is_one(self):
        rng = np.random.default_rng(0)
        v = DominantCoefficients(values=[rng.uniform(0.5, 2.0, 50)],
                                 positions=[np.arange(50)])
        fit = structure_functions(v, np.array([0.0]))
        assert fit.log_s[0, 0] == 0.0

    def test_first_moment_is_mean(self):
        rng = np.random.default_rng(1)
        vals = rng.uniform(0.5, 2.0, 50)
        v = DominantCoefficients(values=[vals], positions=[np.arange(50)])
        fit = structure_functions(v, np.array([1.0]))
        assert fit.s[0, 0] == pytest.approx(vals.mean(), rel=1e-12)

    def test_zero_coefficient_rejected(self):
        v = DominantCoefficients(values=[np.array([1.0, 0.0])],
                                 positions=[np.arange(2)])
        with pytest.raises(ValueError, match="nonpositive"):
            structure_functions(v, q_grid())


class TestFitZeta:
    def test_exact_power_law_recovered(self):
        q = q_grid()
        taus = 2.0 ** np.arange(1, 9)
        h = 0.5
        log_s = np.outer(np.log(taus), q * h)
        fit = ScalingFit(q=q, log_s=log_s, counts=np.full(8, 100))
        out = fit_zeta(fit, taus, k_min=2, k_max=6)
        assert np.allclose(out.zeta, 0.5 * q, atol=1e-12)
        assert np.allclose(out.r_squared, 1.0)

    def test_zeta_zero_at_q_zero(self):
        x = white_noise(2 ** 12, 1.0, seed=3)
        imf_set = sift(np.cumsum(x))
        fit = structure_functions(dominant_amplitudes(imf_set), q_grid())
        out = fit_zeta(fit, imf_set.timescales[: fit.log_s.shape[0]])
        assert abs(out.zeta[np.isclose(out.q, 0.0)][0]) <= 1e-9

    def test_too_few_scales_raises(self):
        q = q_grid()
        log_s = np.zeros((3, q.size))
        fit = ScalingFit(q=q, log_s=log_s, counts=np.full(3, 100))
        with pytest.raises(ValueError, match="only 3 scales"):
            fit_zeta(fit, 2.0 ** np.arange(1, 4), k_min=2, k_max=6)

    def test_thin_scales_excluded_with_warning(self):
        q = q_grid()
        taus = 2.0 ** np.arange(1, 9)
        log_s = np.outer(np.log(taus), 0.5 * q)
        counts = np.full(8, 100)
        counts[3] = 2  # scale k=4 unusable
        fit = ScalingFit(q=q, log_s=log_s, counts=counts)
        with pytest.warns(UserWarning, match="k=4"):
            out = fit_zeta(fit, taus, k_min=2, k_max=6)
        assert np.allclose(out.zeta, 0.5 * q, atol=1e-12)


class TestLegendre:
    def test_monofractal_line(self):
        q = q_grid()
        fit = ScalingFit(q=q, log_s=np.zeros((1, q.size)), counts=np.array([1]),
                         zeta=0.5 * q, r_squared=np.ones(q.size))
        spectrum = legendre(fit)
        assert np.allclose(spectrum.alpha, 0.5, atol=1e-12)
        assert np.allclose(spectrum.f_alpha, 1.0, atol=1e-12)
        assert spectrum.width == pytest.approx(0.0, abs=1e-12)

    def test_quadratic_zeta_analytic(self):
        # zeta(q) = qH - (lam2/2)(q^2 - q) -> alpha = H + lam2/2 - lam2*q
        q = q_grid()
        h, lam2 = 0.5, 0.05
        zeta = q * h - (lam2 / 2) * (q ** 2 - q)
        fit = ScalingFit(q=q, log_s=np.zeros((1, q.size)), counts=np.array([1]),
                         zeta=zeta)
        spectrum = legendre(fit)
        assert np.allclose(spectrum.alpha, h + lam2 / 2 - lam2 * q, atol=1e-12)
        assert spectrum.width == pytest.approx(0.5, abs=1e-12)
        # exactly concave exponents keep the spectrum below dimension one
        assert np.max(spectrum.f_alpha) <= 1.0 + 1e-6

    def test_f_peak_is_one_at_q_zero(self):
        q = q_grid()
        zeta = 0.4 * q - 0.01 * q ** 2
        fit = ScalingFit(q=q, log_s=np.zeros((1, q.size)), counts=np.array([1]),
                         zeta=zeta)
        spectrum = legendre(fit)
        f_at_q0 = spectrum.f_alpha[np.isclose(q, 0.0)][0]
        assert f_at_q0 == pytest.approx(1.0, abs=1e-6)

    def test_nonuniform_grid_rejected(self):
        q = np.array([-1.0, 0.0, 0.5, 1.0])
        fit = ScalingFit(q=q, log_s=np.zeros((1, 4)), counts=np.array([1]),
                         zeta=np.zeros(4))
        with pytest.raises(ValueError, match="uniform"):
            legendre(fit)

    def test_unfitted_rejected(self):
        q = q_grid()
        fit = ScalingFit(q=q, log_s=np.zeros((1, q.size)), counts=np.array([1]))
        with pytest.raises(ValueError, match="not fitted"):
            legendre(fit)


class TestAnalyze:
    def test_pink_noise_direct_is_near_monofractal(self):
        widths = [analyze(pink_noise(2 ** 15, 1.0, seed), integrate=False).width
                  for seed in range(3)]
        assert np.mean(widths) <= 0.35

    def test_fgn_integrated_path_scaling(self):
        z2, widths = [], []
        for seed in range(3):
            fgn = spectral_gaussian(2 ** 15, 0.0, 100 + seed)
            spectrum = analyze(fgn, integrate=True)
            z2.append(spectrum.zeta[np.isclose(spectrum.q, 2.0)][0])
            widths.append(spectrum.width)
        assert np.mean(z2) == pytest.approx(1.0, abs=0.1)
        assert np.mean(widths) <= 0.35

    def test_lognormal_cascade_width(self):
        widths = [analyze(lognormal_cascade_walk(2 ** 15, 0.05, seed),
                          integrate=False).width for seed in range(4)]
        assert np.mean(widths) == pytest.approx(0.5, abs=0.15)

    def test_constant_series_fails_with_stage(self):
        with pytest.raises(ValueError, match="dominant amplitudes"):
            analyze(np.full(2 ** 10, 0.977))

    def test_short_series_rejected(self):
        with pytest.raises(ValueError, match="at least 1024"):
            analyze(np.sin(np.arange(512.0)))

    def test_consistency_invariants(self):
        # full-length canonical input: the structural identities hold
        # exactly, concavity of the fitted exponents up to fit noise
        spectrum = analyze(pink_noise(2 ** 15, 1.0, seed=8), integrate=True)
        q = spectrum.q
        assert abs(spectrum.zeta[np.isclose(q, 0.0)][0]) <= 1e-9
        assert spectrum.f_alpha[np.isclose(q, 0.0)][0] == pytest.approx(1.0, abs=1e-6)
        assert spectrum.width >= 0.0
        # concavity of zeta up to fit noise; alpha increments are the
        # zeta second differences over dq, so the tolerance scales by 1/dq
        dq = q[1] - q[0]
        assert np.all(np.diff(spectrum.zeta, 2) <= 0.02)
        assert np.all(np.diff(spectrum.alpha) <= 0.02 / dq)

    def test_scale_invariance_of_width(self):
        x = pink_noise(2 ** 12, 1.0, seed=21)
        a = analyze(x, integrate=False, min_length=1024)
        b = analyze(1e3 * x, integrate=False, min_length=1024)
        assert abs(a.width - b.width) <= 1e-9
        assert np.allclose(a.zeta, b.zeta, atol=1e-9)


class TestMultifractalAnalyzer:
    def test_fit_exposes_spectrum_attributes(self):
        est = MultifractalAnalyzer(min_length=1024)
        est.fit(white_noise(2 ** 11, 1.0, seed=5))
        assert est.width_ == est.spectrum_.width
        assert est.zeta_.shape == est.q_.shape == est.alpha_.shape
        assert 0.0 <= est.width_

    def test_get_params_roundtrip(self):
        est = MultifractalAnalyzer(k_min=3, k_max=7, integrate=False)
        params = est.get_params()
        clone = MultifractalAnalyzer(**params)
        assert clone.get_params() == params

    def test_q_grid_matches_bounds(self):
        est = MultifractalAnalyzer(q_min=-2, q_max=2, q_step=0.5, min_length=1024)
        est.fit(white_noise(2 ** 11, 1.0, seed=6))
        assert est.q_[0] == -2.0 and est.q_[-1] == 2.0
        assert len(est.q_) == 9
