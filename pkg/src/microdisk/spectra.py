"""Photoluminescence spectrum synthesis and resonance fitting.

Synthetic spectra combine an emitter background (zero-phonon line, broad
phonon sideband, narrow bulk Raman line), Lorentzian cavity peaks, and a
weak Fabry-Perot fringe modulation; the instrument applies a Gaussian
response integrated over finite detector pixels.  Fitting inverts that
chain for one line at a time and reproduces the resolution-limited lower
bound logic for narrow resonances.  Wavelengths are in nm throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.ndimage import median_filter
from scipy.signal import find_peaks, peak_widths
from scipy.special import erf, voigt_profile

RAMAN_SHIFT_CM = 1332.5     # diamond optical phonon
EXCITATION_NM = 532.0


class FitError(RuntimeError):
    """Line fit failed to converge or the window is degenerate."""


@dataclass(frozen=True)
class InstrumentResponse:
    """Gaussian spectrometer response sampled on finite pixels.

    fwhm_nm is the Gaussian FWHM of the system response; uncertainty_nm is
    the 1-sigma error of that calibration, which drives the
    resolution-limited decision in fits.
    """

    fwhm_nm: float = 0.025
    pixel_nm: float = 0.012
    pixel_count: int = 1024
    lam_start_nm: float = 630.0
    uncertainty_nm: float = 0.010

    def __post_init__(self):
        if self.fwhm_nm <= 0 or self.pixel_nm <= 0:
            raise ValueError("response FWHM and pixel pitch must be positive")

    @property
    def sigma_nm(self) -> float:
        return self.fwhm_nm / (2.0 * math.sqrt(2.0 * math.log(2.0)))

    def pixel_centers(self) -> np.ndarray:
        return self.lam_start_nm + self.pixel_nm * (np.arange(self.pixel_count) + 0.5)


@dataclass
class Spectrum:
    lam_nm: np.ndarray
    intensity: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lam_nm = np.asarray(self.lam_nm, dtype=float)
        self.intensity = np.asarray(self.intensity, dtype=float)
        if self.lam_nm.shape != self.intensity.shape:
            raise ValueError("wavelength and intensity arrays differ in length")
        if np.any(np.diff(self.lam_nm) <= 0):
            raise ValueError("wavelengths must be strictly increasing")

    def to_csv(self, path):
        np.savetxt(path, np.column_stack([self.lam_nm, self.intensity]),
                   delimiter=",", header="lam_nm,intensity", comments="")

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        return cls(lam_nm=data[:, 0], intensity=data[:, 1], metadata={"source": str(path)})


@dataclass
class LineFit:
    center_nm: float
    fwhm_lorentz_nm: float
    fwhm_lorentz_ci_nm: tuple
    fwhm_gauss_nm: float
    q: float
    q_lower_bound: float
    resolution_limited: bool
    amplitude: float = 0.0

    def to_json_dict(self):
        return {"center_nm": self.center_nm, "fwhm_lorentz_nm": self.fwhm_lorentz_nm,
                "fwhm_lorentz_ci_nm": list(self.fwhm_lorentz_ci_nm),
                "fwhm_gauss_nm": self.fwhm_gauss_nm, "q": self.q,
                "q_lower_bound": self.q_lower_bound,
                "resolution_limited": self.resolution_limited,
                "amplitude": self.amplitude}


# -- pixelized line shapes ----------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(9)


def pixelized_line(center_nm, fwhm_lorentz_nm, response: InstrumentResponse,
                   lam_pixels=None) -> np.ndarray:
    """Unit-area Lorentzian line through the pixelized Gaussian response.

    The Voigt profile (Lorentzian convolved with the response Gaussian) is
    integrated over each pixel bin and divided by the pitch, so values are
    mean in-bin intensities.  A zero-width Lorentzian reduces to the exact
    erf-difference pixel-integrated Gaussian.
    """
    lam = response.pixel_centers() if lam_pixels is None else np.asarray(lam_pixels)
    if lam_pixels is None and not (lam[0] <= center_nm <= lam[-1]):
        raise ValueError(f"line at {center_nm} nm outside the pixel range")
    half = 0.5 * response.pixel_nm
    sigma = response.sigma_nm
    gamma = 0.5 * fwhm_lorentz_nm
    if gamma <= 0:
        a = (lam - half - center_nm) / (sigma * math.sqrt(2.0))
        b = (lam + half - center_nm) / (sigma * math.sqrt(2.0))
        return (erf(b) - erf(a)) / (2.0 * response.pixel_nm)
    x = lam[:, None] + half * _GL_NODES[None, :] - center_nm
    vals = voigt_profile(x, sigma, gamma)
    return vals @ _GL_WEIGHTS / 2.0


def _pixel_average(func, lam, pitch):
    """Mean of a smooth function over each pixel bin (Gauss-Legendre)."""
    x = lam[:, None] + 0.5 * pitch * _GL_NODES[None, :]
    return func(x) @ _GL_WEIGHTS / 2.0


def apply_instrument_response(center_nm, fwhm_lorentz_nm, response: InstrumentResponse,
                              amplitude: float = 1.0) -> Spectrum:
    """Sampled profile of one ideal line through the instrument chain."""
    vals = amplitude * pixelized_line(center_nm, fwhm_lorentz_nm, response)
    return Spectrum(lam_nm=response.pixel_centers(), intensity=vals,
                    metadata={"center_nm": center_nm, "fwhm_lorentz_nm": fwhm_lorentz_nm})


# -- synthesis ----------------------------------------------------------------

def raman_line_nm(excitation_nm: float = EXCITATION_NM,
                  shift_cm: float = RAMAN_SHIFT_CM) -> float:
    """Stokes Raman wavelength: 1/lam = 1/lam_exc - shift."""
    return 1.0 / (1.0 / excitation_nm - shift_cm * 1e-7)


@dataclass(frozen=True)
class BackgroundSpec:
    """Phenomenological emitter background (amplitudes in arbitrary units)."""

    zpl_nm: float = 637.0
    zpl_fwhm_nm: float = 1.8
    zpl_amplitude: float = 160.0
    sideband_peak_nm: float = 680.0
    sideband_width_nm: float = 55.0
    sideband_amplitude: float = 260.0
    raman_amplitude: float = 90.0
    raman_fwhm_nm: float = 0.7
    floor: float = 12.0

    def evaluate(self, lam):
        lam = np.asarray(lam, dtype=float)
        out = np.full_like(lam, self.floor)
        out += _gaussian(lam, self.zpl_nm, self.zpl_fwhm_nm) * self.zpl_amplitude
        out += _gaussian(lam, raman_line_nm(), self.raman_fwhm_nm) * self.raman_amplitude
        # Asymmetric (log-normal in offset) phonon sideband peaking at 680 nm
        mu = math.log(self.sideband_width_nm)
        s = 0.55
        shifted = lam - (self.sideband_peak_nm - self.sideband_width_nm)
        ln = np.zeros_like(lam)
        ok = shifted > 0
        ln[ok] = np.exp(-0.5 * ((np.log(shifted[ok]) - mu) / s) ** 2)
        out += self.sideband_amplitude * ln
        return out


def _gaussian(x, center, fwhm):
    s = fwhm / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    return np.exp(-0.5 * ((x - center) / s) ** 2)


@dataclass(frozen=True)
class FringeSpec:
    """Fabry-Perot-like transverse mode modulation of the background."""

    period_nm: float = 18.0
    contrast: float = 0.06
    phase: float = 0.0

    def evaluate(self, lam):
        if self.contrast == 0:
            return np.ones_like(lam)
        return 1.0 + self.contrast * np.sin(2.0 * math.pi * lam / self.period_nm + self.phase)


def synthesize_spectrum(mode_lines, response: InstrumentResponse,
                        background: BackgroundSpec | None = None,
                        fringes: FringeSpec | None = None,
                        noise_scale: float = 0.0, seed: int = 0) -> Spectrum:
    """Synthetic PL spectrum on the instrument's pixel grid.

    mode_lines is a list of (lam_nm, Q, amplitude): each becomes a
    Lorentzian of FWHM lam/Q through the pixelized response.  Poisson-like
    noise (variance proportional to the signal) is added when noise_scale
    is positive, using the fixed seed.
    """
    lam = response.pixel_centers()
    total = np.zeros_like(lam)
    if background is not None:
        total += _pixel_average(background.evaluate, lam, response.pixel_nm)
    if fringes is not None and background is not None:
        total *= fringes.evaluate(lam)
    window = (lam[0] - 1.0, lam[-1] + 1.0)
    for lam0, q, amp in mode_lines:
        if not window[0] <= lam0 <= window[1]:
            raise ValueError(f"mode at {lam0} nm outside the spectrum window")
        total += amp * pixelized_line(lam0, lam0 / q, response, lam_pixels=lam)
    if noise_scale > 0:
        rng = np.random.default_rng(seed)
        counts = np.clip(total / noise_scale, 0.0, None)
        total = rng.poisson(counts) * noise_scale
    meta = {"n_modes": len(mode_lines), "seed": seed, "noise_scale": noise_scale}
    return Spectrum(lam_nm=lam, intensity=total, metadata=meta)


# -- peak detection -----------------------------------------------------------

@dataclass(frozen=True)
class PeakCandidate:
    lam_nm: float
    height: float
    prominence: float
    width_nm: float
    unresolved: bool = False


def detect_peaks(spectrum: Spectrum, baseline_window: int = 101,
                 threshold_sigma: float = 6.0, min_separation_px: int = 3,
                 max_width_nm: float | None = None,
                 wing_radius_nm: float = 0.6,
                 wing_factor: float = 4.0) -> list:
    """Background-subtracted local-maximum peak detection.

    The baseline is a rolling minimum followed by a moving-average smooth;
    peaks must exceed threshold_sigma times the locally estimated noise of
    the subtracted signal.  Shot-noise bumps riding on a strong line's
    wings pass any plain threshold, so a candidate within wing_radius_nm of
    a taller one is dropped unless it exceeds wing_factor times the taller
    line's estimated Lorentzian wing level at that offset.  max_width_nm,
    when given, additionally drops candidates wider than that (broad
    emitter-background bumps rather than cavity lines).  Returns
    PeakCandidates sorted by wavelength.
    """
    y = spectrum.intensity
    if len(y) < 16:
        raise ValueError("spectrum too short for peak detection")
    win = min(baseline_window, 2 * (len(y) // 4) + 1)
    base = _rolling_min(y, win)
    base = np.convolve(base, np.ones(win) / win, mode="same")
    resid = y - base
    # the rolling-minimum baseline sits a couple of noise sigma low
    resid -= np.median(resid)
    # Shot noise varies across the spectrum; estimate it locally so bright
    # regions do not leak noise spikes past the threshold.  Count-quantized
    # data reveals its quantum as the smallest nonzero step of the raw
    # signal, which gives both a noise floor for dim regions and the
    # per-pixel scaled-Poisson term sqrt(quantum * signal).
    raw_steps = np.abs(np.diff(y))
    nonzero = raw_steps[raw_steps > 0]
    quantum = float(nonzero.min()) if len(nonzero) else 0.0
    diffs = np.abs(np.diff(resid))
    local = median_filter(diffs, size=win, mode="nearest")
    local = 1.4826 * np.concatenate([local, local[-1:]]) / math.sqrt(2.0)
    shot = np.sqrt(quantum * np.maximum(y, quantum))
    noise = np.maximum.reduce([local, shot, np.full_like(y, quantum)]) + 1e-12
    floor = float(np.median(noise))
    idx, props = find_peaks(resid, height=threshold_sigma * floor,
                            prominence=threshold_sigma * floor,
                            distance=min_separation_px)
    widths = peak_widths(resid, idx, rel_height=0.5)[0]
    pitch = float(np.median(np.diff(spectrum.lam_nm)))
    lam_all = spectrum.lam_nm[idx]
    h_all = resid[idx]
    w_all = widths * pitch
    out = []
    for k, i in enumerate(idx):
        if resid[i] < threshold_sigma * noise[i]:
            continue
        width_nm = float(w_all[k])
        if max_width_nm is not None and width_nm > max_width_nm:
            continue
        if _is_wing_artifact(k, lam_all, h_all, w_all, wing_radius_nm,
                             wing_factor):
            continue
        out.append(PeakCandidate(
            lam_nm=float(spectrum.lam_nm[i]), height=float(resid[i]),
            prominence=float(props["prominences"][k]),
            width_nm=width_nm,
            unresolved=bool(widths[k] <= 1.0)))
    return out


def _is_wing_artifact(k, lam, height, width, radius_nm, factor):
    """True when candidate k is attributable to a taller neighbor's wing."""
    for j in range(len(lam)):
        if j == k or height[j] <= height[k]:
            continue
        offset = abs(lam[j] - lam[k])
        if offset == 0 or offset > radius_nm:
            continue
        gamma = 0.5 * max(width[j], 1e-6)
        wing = height[j] * gamma ** 2 / (gamma ** 2 + offset ** 2)
        if height[k] < factor * wing:
            return True
    return False


def _rolling_min(y, win):
    half = win // 2
    padded = np.pad(y, half, mode="edge")
    view = np.lib.stride_tricks.sliding_window_view(padded, win)
    return view.min(axis=1)


# -- line fitting -------------------------------------------------------------

def fit_resonance(spectrum: Spectrum, window_nm, response: InstrumentResponse,
                  max_iter: int = 60) -> LineFit:
    """Pixelized-Voigt least squares for one resonance.

    Fits (center, amplitude, Lorentzian FWHM, linear baseline) with the
    Gaussian FWHM fixed by the response.  The Lorentzian-width confidence
    interval comes from a chi-square profile scan, which stays well defined
    at the FWHM -> 0 boundary; when the interval reaches below the response
    calibration uncertainty the line is flagged resolution-limited and
    Q_lower_bound = lam / (upper CI bound) is reported.
    """
    lo, hi = window_nm
    sel = (spectrum.lam_nm >= lo) & (spectrum.lam_nm <= hi)
    lam = spectrum.lam_nm[sel]
    y = spectrum.intensity[sel]
    if len(lam) < 8:
        raise FitError("fit window contains fewer than 8 pixels")
    if np.ptp(y) <= 0:
        raise FitError("fit window is flat")

    lam0 = float(lam[np.argmax(y)])
    # The center is within a pixel or two of the maximum; keep the search
    # interval comparable to the line width so the optimizer cannot miss
    # the (narrow) chi-square dip.
    c_half = max(3.0 * response.pixel_nm, 0.75 * response.fwhm_nm)

    def chi2_at(fwhm_l, center):
        profile = pixelized_line(center, fwhm_l, response, lam_pixels=lam)
        basis = np.column_stack([profile, np.ones_like(lam), lam - lam0])
        coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
        resid = y - basis @ coef
        return float(resid @ resid), coef

    def chi2_min_over_center(fwhm_l):
        res = minimize_scalar(
            lambda c: chi2_at(fwhm_l, c)[0],
            bounds=(lam0 - c_half, lam0 + c_half), method="bounded",
            options={"maxiter": max_iter, "xatol": 1e-8})
        return res.fun, res.x

    # Coarse-to-fine profile of chi^2 over the Lorentzian width
    fwhm_grid = np.concatenate([[0.0], np.geomspace(2e-4, max(4 * response.fwhm_nm, 0.1), 28)])
    chi = np.array([chi2_min_over_center(w)[0] for w in fwhm_grid])
    k = int(np.argmin(chi))
    lo_w = fwhm_grid[max(k - 1, 0)]
    hi_w = fwhm_grid[min(k + 1, len(fwhm_grid) - 1)]
    refine = np.linspace(lo_w, hi_w, 12)
    chi_r = np.array([chi2_min_over_center(w)[0] for w in refine])
    kr = int(np.argmin(chi_r))
    bracket = (refine[max(kr - 1, 0)], refine[min(kr + 1, len(refine) - 1)])
    polish = minimize_scalar(lambda w: chi2_min_over_center(w)[0],
                             bounds=bracket, method="bounded",
                             options={"xatol": 1e-9, "maxiter": max_iter})
    best_w = float(polish.x) if polish.fun <= chi_r[kr] else float(refine[kr])
    best_w = max(best_w, 0.0)
    chi_min, best_center = chi2_min_over_center(best_w)
    _, coef = chi2_at(best_w, best_center)

    dof = max(len(lam) - 4, 1)
    sigma2 = chi_min / dof
    target = chi_min + sigma2  # delta chi^2 = 1 at 1 sigma for one parameter

    def excess(w):
        return chi2_min_over_center(w)[0] - target

    ci_lo = _crossing(excess, best_w, 0.0, decreasing=True)
    ci_hi = _crossing(excess, best_w, float(fwhm_grid[-1]), decreasing=False)

    center = float(best_center)
    q = center / best_w if best_w > 0 else math.inf
    # The reported bound folds the response calibration uncertainty into the
    # statistical upper width bound, so it degrades gracefully as the
    # assumed response error grows.
    q_lower = center / (ci_hi + response.uncertainty_nm)
    limited = ci_lo <= response.uncertainty_nm
    return LineFit(center_nm=center, fwhm_lorentz_nm=best_w,
                   fwhm_lorentz_ci_nm=(float(ci_lo), float(ci_hi)),
                   fwhm_gauss_nm=response.fwhm_nm, q=float(q),
                   q_lower_bound=float(q_lower), resolution_limited=bool(limited),
                   amplitude=float(coef[0]))


def _crossing(excess, best_w, limit, decreasing):
    """Width where the chi^2 profile crosses the CI target, by bisection.

    Walks geometrically from the optimum toward `limit` until the excess
    turns positive, then bisects the bracket; returns `limit` when the
    profile never reaches the target on that side.
    """
    if excess(limit) <= 0:
        return limit
    span = abs(limit - best_w)
    step = max(span * 1e-3, 1e-6)
    prev = best_w
    probe = best_w - step if decreasing else best_w + step
    while (probe > limit) if decreasing else (probe < limit):
        if excess(probe) > 0:
            break
        prev, step = probe, step * 2.0
        probe = probe - step if decreasing else probe + step
    else:
        probe = limit
    lo, hi = (probe, prev) if decreasing else (prev, probe)
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if hi - lo < 1e-7:
            break
        if excess(mid) > 0:
            if decreasing:
                lo = mid
            else:
                hi = mid
        else:
            if decreasing:
                hi = mid
            else:
                lo = mid
    return 0.5 * (lo + hi)


# -- family assignment --------------------------------------------------------

def assign_families(peaks, family_tables, tol_nm: float = 0.3,
                    min_chain: int = 3, tie_factor: float = 1.5,
                    position_tol_nm: float = 0.15) -> list:
    """Chain peaks into FSR progressions and label them against simulations.

    peaks: PeakCandidates (or anything with lam_nm).  family_tables maps a
    family name to its simulated dispersion in one of three forms: a list of
    resonance wavelengths (nm, or (m, lam_um) pairs), FSR table rows
    (lam_um, fsr_nm, ...), or a callable fsr(lam_nm).

    Greedy chaining walks the peaks in wavelength order, extending each
    chain with the peak nearest the previous member plus the family FSR at
    that wavelength (skipping up to one undetected member); chains shorter
    than min_chain stay unknown.  Each chain is labeled with the family of
    smallest RMS spacing mismatch; when two families' FSR curves agree
    within tie_factor (they can genuinely nearly coincide, as the
    polarization and radial-order shifts can cancel), the tie falls to the
    smaller RMS distance to the family's predicted resonance positions,
    then to the lower radial order.  Returns [(peak, label)] in input order.
    """
    lams = np.array(sorted(p.lam_nm for p in peaks))
    fams = {name: _family_predictor(table) for name, table in family_tables.items()}

    def order_of(name):
        digits = "".join(ch for ch in name if ch.isdigit())
        return int(digits) if digits else 0

    best = {}
    for name in sorted(fams, key=lambda n: (order_of(n), n)):
        fsr, _ = fams[name]
        used = np.zeros(len(lams), dtype=bool)
        for start in range(len(lams)):
            if used[start]:
                continue
            chain = [start]
            current = lams[start]
            while True:
                hop, j = None, -1
                for skip in (1, 2):  # tolerate one missing comb member
                    target = current + skip * fsr(current + (skip - 1) * fsr(current) / 2)
                    cand = int(np.argmin(np.abs(lams - target)))
                    if abs(lams[cand] - target) <= skip * tol_nm and cand not in chain:
                        hop, j = skip, cand
                        break
                if hop is None:
                    break
                chain.append(j)
                current = lams[j]
            if len(chain) < min_chain:
                continue
            used[chain] = True
            label, rms = _label_chain(lams[chain], fams, order_of, tie_factor, tol_nm)
            for j in chain:
                if j not in best or rms < best[j][1]:
                    best[j] = (label, rms)

    # Comb crossings blend two families into one detection and can carry a
    # chain onto the wrong comb.  When predicted positions are available,
    # evict members that sit clearly closer to another family's comb; the
    # ratio test keeps this inert under a uniform simulation-vs-measurement
    # wavelength shift, where all distances grow together.
    for j, (label, rms) in list(best.items()):
        positions = fams.get(label, (None, None))[1]
        if positions is None or not len(positions):
            continue
        d_label = float(np.abs(positions - lams[j]).min())
        if d_label <= position_tol_nm:
            continue
        candidates = [(float(np.abs(pos - lams[j]).min()), order_of(nm), nm)
                      for nm, (_, pos) in fams.items()
                      if pos is not None and len(pos)]
        d_best, _, nearest = min(candidates)
        if d_best <= position_tol_nm and d_best < 0.5 * d_label:
            best[j] = (nearest, rms)

    label_by_lam = {lams[j]: name for j, (name, _) in best.items()}
    return [(p, label_by_lam.get(p.lam_nm, "unknown")) for p in peaks]


def _label_chain(chain_lams, fams, order_of, tie_factor, tol_nm):
    spacings = np.diff(chain_lams)
    mids = 0.5 * (chain_lams[:-1] + chain_lams[1:])
    scores = []
    for name, (fsr, positions) in fams.items():
        expected = np.array([fsr(x) for x in mids])
        # A skipped comb member shows up as a ~2 FSR gap: compare against
        # the nearest positive multiple but charge each skip the chain
        # tolerance, so sparse gappy chains cannot outscore full ones.
        mult = np.maximum(np.round(spacings / expected), 1.0)
        err2 = (spacings - mult * expected) ** 2 + (mult - 1.0) * tol_nm ** 2
        rms_sp = float(np.sqrt(np.mean(err2)))
        if positions is not None and len(positions):
            rms_pos = float(np.sqrt(np.mean(
                (chain_lams[:, None] - positions[None, :]).min(axis=1) ** 2)))
        else:
            rms_pos = math.inf
        scores.append((name, rms_sp, rms_pos))
    scores.sort(key=lambda s: s[1])
    top = [s for s in scores if s[1] <= tie_factor * max(scores[0][1], 1e-9)]
    if len(top) > 1 and any(math.isfinite(s[2]) for s in top):
        top.sort(key=lambda s: (s[2], order_of(s[0])))
    else:
        top.sort(key=lambda s: (s[1], order_of(s[0])))
    return top[0][0], top[0][1]


def _family_predictor(table):
    """Normalize a family table into (fsr(lam_nm), positions_nm or None)."""
    if callable(table):
        return table, None
    rows = list(table)
    if rows and np.isscalar(rows[0]):
        positions = np.sort(np.asarray(rows, dtype=float))
    elif rows and len(rows[0]) == 2:
        positions = np.sort(np.array([lam_um * 1e3 for _, lam_um in rows]))
    else:
        xs = np.array(sorted(lam_um * 1e3 for lam_um, *_ in rows))
        ys = np.array([fsr for _, fsr, *_ in sorted(rows)])
        return (lambda lam: float(np.interp(lam, xs, ys))), None
    xs = 0.5 * (positions[:-1] + positions[1:])
    ys = np.diff(positions)

    def fsr(lam_nm):
        return float(np.interp(lam_nm, xs, ys))

    return fsr, positions
