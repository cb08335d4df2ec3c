import math

import numpy as np
import pytest
from scipy.special import erf

from microdisk import spectra
from microdisk.spectra import (BackgroundSpec, FringeSpec, InstrumentResponse,
                               LineFit, Spectrum, apply_instrument_response,
                               assign_families, detect_peaks, fit_resonance,
                               pixelized_line, raman_line_nm, synthesize_spectrum)


def noisy_line(q, seed, snr=50.0, amp=40.0, resp=None, lam0=637.0):
    resp = resp or InstrumentResponse()
    clean = synthesize_spectrum([(lam0, q, amp)], resp, noise_scale=0.0, seed=seed)
    scale = clean.intensity.max() / snr ** 2
    return synthesize_spectrum([(lam0, q, amp)], resp, noise_scale=scale, seed=seed)


class TestPixelizedLine:
    def test_delta_line_matches_erf_closed_form(self):
        resp = InstrumentResponse()
        lam = resp.pixel_centers()
        vals = pixelized_line(637.0, 0.0, resp)
        s = resp.sigma_nm * math.sqrt(2.0)
        a = (lam - resp.pixel_nm / 2 - 637.0) / s
        b = (lam + resp.pixel_nm / 2 - 637.0) / s
        ref = (erf(b) - erf(a)) / (2 * resp.pixel_nm)
        assert np.abs(vals - ref).max() < 1e-10

    def test_ideal_instrument_recovers_lorentzian(self):
        resp = InstrumentResponse(fwhm_nm=1e-5, pixel_nm=1e-4, pixel_count=2001,
                                  lam_start_nm=636.9)
        vals = pixelized_line(637.0, 0.02, resp)
        x = resp.pixel_centers()
        gamma = 0.01
        lorentz = gamma / math.pi / ((x - 637.0) ** 2 + gamma ** 2)
        assert np.abs(vals - lorentz).max() / lorentz.max() < 1e-3

    def test_voigt_fwhm_equal_widths(self):
        # Oracle: high-resolution numerical convolution of a Lorentzian and
        # a Gaussian of equal FWHM w; the Voigt FWHM is about 1.64 w.
        w = 0.05
        x = np.arange(-2.0, 2.0, 1e-4)
        gamma = w / 2
        lor = gamma / math.pi / (x ** 2 + gamma ** 2)
        sig = w / (2 * math.sqrt(2 * math.log(2)))
        gau = np.exp(-0.5 * (x / sig) ** 2)
        conv = np.convolve(lor, gau, mode="same")
        half = np.nonzero(conv >= conv.max() / 2)[0]
        fwhm_ref = (half[-1] - half[0]) * 1e-4

        resp = InstrumentResponse(fwhm_nm=w, pixel_nm=2e-4, pixel_count=20000,
                                  lam_start_nm=635.0)
        vals = pixelized_line(637.0, w, resp)
        lamc = resp.pixel_centers()
        half2 = np.nonzero(vals >= vals.max() / 2)[0]
        fwhm = lamc[half2[-1]] - lamc[half2[0]]
        assert fwhm == pytest.approx(fwhm_ref, rel=5e-3)
        assert fwhm == pytest.approx(1.64 * w, rel=0.02)

    def test_area_conserved(self):
        resp = InstrumentResponse(pixel_count=8000, lam_start_nm=589.0)
        vals = pixelized_line(637.0, 0.05, resp)
        # wide window: Lorentzian tails inside to the 1e-4 level
        assert vals.sum() * resp.pixel_nm == pytest.approx(1.0, abs=1e-3)

    def test_line_outside_range_rejected(self):
        resp = InstrumentResponse()
        with pytest.raises(ValueError, match="outside"):
            pixelized_line(700.0, 0.01, resp)

    def test_apply_instrument_response_wrapper(self):
        resp = InstrumentResponse()
        spec = apply_instrument_response(637.0, 0.05, resp, amplitude=3.0)
        assert isinstance(spec, Spectrum)
        assert spec.intensity.max() > 0
        assert spec.intensity.sum() * resp.pixel_nm == pytest.approx(3.0, rel=0.01)


class TestSynthesis:
    def test_raman_wavenumber_arithmetic(self):
        # 1/532 nm - 1332.5 cm^-1
        assert raman_line_nm() == pytest.approx(572.6, abs=0.1)

    def test_background_only_landmarks(self):
        resp = InstrumentResponse(pixel_nm=0.05, pixel_count=3000,
                                  lam_start_nm=550.0)
        spec = synthesize_spectrum([], resp, background=BackgroundSpec())
        lam, inten = spec.lam_nm, spec.intensity
        # global maximum near 680 nm (phonon sideband)
        assert abs(lam[np.argmax(inten)] - 680.0) < 10.0
        # local maxima at the 637 zero-phonon line and 572.6 Raman line
        for center, tol in ((637.0, 1.0), (572.6, 0.5)):
            window = (lam > center - 4) & (lam < center + 4)
            peak_lam = lam[window][np.argmax(inten[window])]
            assert abs(peak_lam - center) < tol
            inner = np.argmax(inten[window])
            assert 0 < inner < window.sum() - 1  # a genuine local maximum

    def test_single_mode_no_background(self):
        resp = InstrumentResponse()
        spec = synthesize_spectrum([(637.0, 1e4, 10.0)], resp)
        assert spec.lam_nm[np.argmax(spec.intensity)] == pytest.approx(637.0,
                                                                       abs=0.02)

    def test_mode_outside_window_rejected(self):
        resp = InstrumentResponse()
        with pytest.raises(ValueError, match="outside"):
            synthesize_spectrum([(700.0, 1e4, 10.0)], resp)

    def test_noise_seeded_deterministic(self):
        resp = InstrumentResponse()
        s1 = synthesize_spectrum([(637.0, 1e4, 10.0)], resp, noise_scale=0.1,
                                 seed=7)
        s2 = synthesize_spectrum([(637.0, 1e4, 10.0)], resp, noise_scale=0.1,
                                 seed=7)
        assert np.array_equal(s1.intensity, s2.intensity)

    def test_csv_round_trip(self, tmp_path):
        resp = InstrumentResponse(pixel_count=64)
        spec = synthesize_spectrum([(630.3, 1e4, 5.0)], resp,
                                   background=BackgroundSpec())
        spec.to_csv(tmp_path / "s.csv")
        back = Spectrum.from_csv(tmp_path / "s.csv")
        assert np.allclose(back.lam_nm, spec.lam_nm)
        assert np.allclose(back.intensity, spec.intensity)


class TestDetection:
    def test_eight_injected_modes_snr20(self):
        resp = InstrumentResponse(pixel_count=4000, lam_start_nm=630.0)
        lams = np.linspace(633.0, 675.0, 8)
        lines = [(lam, 2e4, 30.0) for lam in lams]
        clean = synthesize_spectrum(lines, resp, noise_scale=0.0)
        scale = clean.intensity.max() / 20.0 ** 2
        spec = synthesize_spectrum(lines, resp, noise_scale=scale, seed=11)
        peaks = detect_peaks(spec)
        matched = sum(any(abs(p.lam_nm - lam) < 0.1 for p in peaks)
                      for lam in lams)
        false = sum(all(abs(p.lam_nm - lam) > 0.1 for lam in lams)
                    for p in peaks)
        assert matched >= 8
        assert false <= 1

    def test_flat_noise_false_positive_rate(self):
        resp = InstrumentResponse(pixel_count=1024)
        detections = 0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            spec = Spectrum(resp.pixel_centers(),
                            1000.0 + rng.normal(0, 5.0, resp.pixel_count))
            detections += bool(detect_peaks(spec))
        assert detections < 5  # < 5% of seeds show any detection

    def test_sub_pixel_pair_merges_unresolved(self):
        resp = InstrumentResponse()
        spec = synthesize_spectrum([(637.0, 3e4, 30.0), (637.008, 3e4, 30.0)],
                                   resp)
        peaks = detect_peaks(spec)
        near = [p for p in peaks if abs(p.lam_nm - 637.0) < 0.1]
        assert len(near) == 1

    def test_too_short_spectrum(self):
        with pytest.raises(ValueError, match="too short"):
            detect_peaks(Spectrum(np.arange(8.0), np.ones(8)))


class TestFitResonance:
    def test_q1e4_recovered_within_ten_percent(self):
        resp = InstrumentResponse()
        for seed in range(10):
            fit = fit_resonance(noisy_line(1e4, seed), (636.2, 637.8), resp)
            assert abs(fit.q / 1e4 - 1) < 0.10
            assert not fit.resolution_limited

    def test_q1e5_resolution_limited(self):
        resp = InstrumentResponse()
        for seed in range(10):
            fit = fit_resonance(noisy_line(1e5, seed), (636.2, 637.8), resp)
            assert fit.resolution_limited
            assert fit.q_lower_bound >= 2.5e4
            assert fit.q_lower_bound <= fit.q

    def test_zero_noise_exact_recovery(self):
        resp = InstrumentResponse()
        fit = fit_resonance(noisy_line(1e4, 0, snr=1e9), (636.2, 637.8), resp)
        assert abs(fit.center_nm / 637.0 - 1) < 1e-6
        assert abs(fit.fwhm_lorentz_nm / 0.0637 - 1) < 1e-6

    def test_q_lower_bound_monotone_in_uncertainty(self):
        bounds = []
        for unc in (0.002, 0.005, 0.01, 0.02):
            resp = InstrumentResponse(uncertainty_nm=unc)
            fit = fit_resonance(noisy_line(1e5, 3, resp=resp), (636.2, 637.8),
                                resp)
            bounds.append(fit.q_lower_bound)
        assert all(b1 >= b2 for b1, b2 in zip(bounds[:-1], bounds[1:]))

    def test_fit_unbiased_over_seeds(self):
        resp = InstrumentResponse()
        true_fwhm = 637.0 / 1e4
        fits = [fit_resonance(noisy_line(1e4, seed, snr=20), (636.2, 637.8),
                              resp) for seed in range(60)]
        widths = np.array([f.fwhm_lorentz_nm for f in fits])
        ci = np.array([f.fwhm_lorentz_ci_nm[1] - f.fwhm_lorentz_nm
                       for f in fits]).mean()
        assert abs(widths.mean() - true_fwhm) < ci

    def test_degenerate_window_rejected(self):
        resp = InstrumentResponse()
        spec = noisy_line(1e4, 0)
        with pytest.raises(spectra.FitError):
            fit_resonance(spec, (636.2, 636.21), resp)

    def test_round_trip_synthesis_detection_fit(self):
        resp = InstrumentResponse(pixel_count=3000, lam_start_nm=630.0)
        truth = [(633.5, 8e3, 50.0), (641.0, 1.5e4, 35.0), (655.0, 2.2e4, 45.0)]
        clean = synthesize_spectrum(truth, resp, noise_scale=0.0)
        spec = synthesize_spectrum(truth, resp,
                                   noise_scale=clean.intensity.max() / 2500,
                                   seed=5)
        peaks = detect_peaks(spec)
        assert len(peaks) == 3
        for (lam0, q0, _), peak in zip(truth, sorted(peaks, key=lambda p: p.lam_nm)):
            fit = fit_resonance(spec, (peak.lam_nm - 0.8, peak.lam_nm + 0.8), resp)
            assert abs(fit.center_nm - lam0) < 0.01
            assert abs(fit.q / q0 - 1) < 0.15

    def test_linefit_json_dict(self):
        fit = LineFit(center_nm=637.0, fwhm_lorentz_nm=0.06,
                      fwhm_lorentz_ci_nm=(0.05, 0.07), fwhm_gauss_nm=0.025,
                      q=1e4, q_lower_bound=9e3, resolution_limited=False)
        d = fit.to_json_dict()
        assert d["q"] == 1e4 and d["fwhm_lorentz_ci_nm"] == [0.05, 0.07]


class TestAssignFamilies:
    def test_single_family_exact_spacing(self):
        lams = [633.0 + 7.5 * k for k in range(5)]
        peaks = [spectra.PeakCandidate(lam, 1.0, 1.0, 0.05) for lam in lams]
        out = assign_families(peaks, {"TE0": lams})
        assert all(label == "TE0" for _, label in out)

    def test_random_peaks_mostly_unknown(self):
        rng = np.random.default_rng(2)
        lams = np.sort(630.0 + 40 * rng.random(12))
        peaks = [spectra.PeakCandidate(float(lam), 1.0, 1.0, 0.05) for lam in lams]
        table = {"TE0": [633.0 + 7.5 * k for k in range(6)]}
        out = assign_families(peaks, table)
        unknown = sum(label == "unknown" for _, label in out)
        assert unknown > len(peaks) / 2

    def test_two_interleaved_families(self):
        te0 = [633.0 + 7.5 * k + 0.01 * k ** 2 for k in range(6)]
        tm0 = [635.2 + 7.1 * k + 0.01 * k ** 2 for k in range(6)]
        peaks = [spectra.PeakCandidate(lam, 1.0, 1.0, 0.05)
                 for lam in sorted(te0 + tm0)]
        out = assign_families(peaks, {"TE0": te0, "TM0": tm0})
        for peak, label in out:
            truth = "TE0" if any(abs(peak.lam_nm - x) < 1e-9 for x in te0) else "TM0"
            assert label == truth

    def test_fsr_table_form_accepted(self):
        lams = [633.0 + 7.5 * k for k in range(5)]
        rows = [(0.5 * (a + b) * 1e-3, b - a, "TE0")
                for a, b in zip(lams[:-1], lams[1:])]
        peaks = [spectra.PeakCandidate(lam, 1.0, 1.0, 0.05) for lam in lams]
        out = assign_families(peaks, {"TE0": rows})
        assert all(label == "TE0" for _, label in out)
