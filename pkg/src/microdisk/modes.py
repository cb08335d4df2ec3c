"""Post-processing of engine output into resonant-mode records.

Covers harmonic inversion of ringdown series (matrix pencil), TE/TM and
radial-order classification of accumulated profiles, normalized mode volume
and diamond-field overlap, FSR dispersion tables, loss-budget composition
and the surface-roughness Q estimate.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy.linalg import hankel, svd
from scipy.signal import firwin

from .device import DIAMOND, GUIDING, DeviceGeometry, IndexMap
from .fdtd import ModeProfile, TimeSeries

C_UM_THZ = 299.792458


class TooShortSeriesError(ValueError):
    """Ringdown record too short for the requested decomposition."""


@dataclass(frozen=True)
class HarmonicComponent:
    """One damped complex exponential: s(t) ~ amp * exp(-i 2 pi nu t - g t)."""

    nu_thz: float
    q: float
    amplitude: complex
    residual: float

    @property
    def lam_um(self) -> float:
        return C_UM_THZ / self.nu_thz


@dataclass(frozen=True)
class RoughnessSpec:
    """Sidewall roughness: RMS amplitude and correlation length, in nm."""

    sigma_nm: float
    corr_length_nm: float

    def __post_init__(self):
        if self.sigma_nm < 0:
            raise ValueError("sigma must be non-negative")
        if self.corr_length_nm <= 0:
            raise ValueError("correlation length must be positive")


@dataclass
class ResonantMode:
    """One whispering-gallery mode record."""

    m: int
    polarization: str
    radial_order: int
    lam_um: float
    q_rad: float
    q_i: float | None = None
    v_bar: float | None = None
    eta: float | None = None
    r_o: tuple | None = None
    standing_wave: bool = False

    def __post_init__(self):
        if self.q_rad <= 0:
            raise ValueError("q_rad must be positive")
        if self.eta is not None and not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if self.v_bar is not None and self.v_bar <= 0:
            raise ValueError("v_bar must be positive")

    @property
    def q_total(self) -> float:
        if self.q_i is None:
            return self.q_rad
        return q_budget(self.q_rad, self.q_i)

    @property
    def v_bar_effective(self) -> float | None:
        """Mode volume in the record's convention (halved for standing waves)."""
        if self.v_bar is None:
            return None
        return 0.5 * self.v_bar if self.standing_wave else self.v_bar

    @property
    def family(self) -> str:
        return f"{self.polarization}{self.radial_order}"

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "ResonantMode":
        d = json.loads(line)
        if d.get("r_o") is not None:
            d["r_o"] = tuple(d["r_o"])
        return cls(**d)


_MODE_CSV_FIELDS = ("m", "polarization", "radial_order", "lam_um", "q_rad",
                    "q_i", "q_total", "v_bar", "eta", "standing_wave")


def modes_to_csv(modes, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_MODE_CSV_FIELDS)
        for mo in modes:
            w.writerow([mo.m, mo.polarization, mo.radial_order,
                        f"{mo.lam_um:.8g}", f"{mo.q_rad:.6g}",
                        "" if mo.q_i is None else f"{mo.q_i:.6g}",
                        f"{mo.q_total:.6g}",
                        "" if mo.v_bar is None else f"{mo.v_bar:.6g}",
                        "" if mo.eta is None else f"{mo.eta:.6g}",
                        int(mo.standing_wave)])


def modes_to_jsonl(modes, path):
    with open(path, "w") as fh:
        for mo in modes:
            fh.write(mo.to_json() + "\n")


# -- harmonic inversion -------------------------------------------------------

def harmonic_inversion(series: TimeSeries, band_thz, max_components: int = 6,
                       decimate_to: int = 512, rank_tol: float = 1e-8) -> list:
    """Decompose a complex ringdown into damped exponentials.

    Matrix-pencil estimation: the series is demodulated to the band center,
    low-pass decimated to about `decimate_to` samples, and the pencil
    eigenvalues of the Hankel data matrix give the complex poles.  Returns
    HarmonicComponents inside band_thz = (lo, hi), sorted by amplitude;
    Q = pi nu / gamma, infinite for non-decaying poles.
    """
    s = np.asarray(series.samples, dtype=np.complex128)
    if len(s) < 4 * max_components:
        raise TooShortSeriesError(
            f"{len(s)} samples cannot support {max_components} components")
    nu_lo, nu_hi = band_thz
    nyquist = 0.5 / series.dt_ps
    if not (-nyquist < nu_lo < nu_hi) or nu_hi - nu_lo > 2 * nyquist:
        raise ValueError("band outside the representable range")
    nu_mid = 0.5 * (nu_lo + nu_hi)

    n = np.arange(len(s))
    y = s * np.exp(2j * math.pi * nu_mid * series.dt_ps * n)
    dt = series.dt_ps

    dec = max(1, len(y) // decimate_to)
    if dec > 1:
        taps = firwin(min(4 * dec + 1, len(y) // 4 * 2 - 1), 0.8 / dec)
        y = np.convolve(y, taps, mode="valid")[::dec]
        dt = dt * dec

    poles, amps, residual = _matrix_pencil(y, max_components, rank_tol)

    out = []
    for z, a in zip(poles, amps):
        if abs(z) < 1e-12:
            continue
        nu = -np.angle(z) / (2.0 * math.pi * dt) + nu_mid
        gamma = -math.log(abs(z)) / dt
        if nu <= 0 or not (nu_lo <= nu <= nu_hi):
            continue
        q = math.pi * nu / gamma if gamma > 0 else math.inf
        out.append(HarmonicComponent(nu_thz=nu, q=q, amplitude=complex(a),
                                     residual=residual))
    out.sort(key=lambda c: -abs(c.amplitude))
    return out


def _matrix_pencil(y, max_components, rank_tol):
    n = len(y)
    pencil = n // 2
    Y = hankel(y[: n - pencil], y[n - pencil - 1:])
    Y0, Y1 = Y[:, :-1], Y[:, 1:]
    try:
        u, sv, vh = svd(Y0, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise TooShortSeriesError(f"pencil decomposition failed: {exc}") from exc
    if sv[0] == 0:
        return np.array([]), np.array([]), 0.0
    k = int(np.sum(sv > rank_tol * sv[0]))
    k = max(1, min(k, max_components))
    uk = u[:, :k]
    vk = vh[:k, :].conj().T
    core = (uk.conj().T @ Y1 @ vk) / sv[:k][None, :]
    poles = np.linalg.eigvals(core)
    # Amplitudes by least squares on the Vandermonde system
    vand = np.vander(poles, N=n, increasing=True).T
    amps, *_ = np.linalg.lstsq(vand, y, rcond=None)
    model = vand @ amps
    residual = float(np.linalg.norm(y - model) / max(np.linalg.norm(y), 1e-300))
    return poles, amps, residual


# -- profile classification ---------------------------------------------------

def classify_mode(profile: ModeProfile, index_map: IndexMap,
                  hybrid_ratio: float = 1.2, smooth: int = 3):
    """(polarization, radial_order) of an accumulated profile.

    TE when the guiding-layer energy of E_r exceeds that of E_z (and vice
    versa); "hybrid" when the two are within hybrid_ratio of each other.
    The radial order counts sign changes of the dominant component along the
    radial cut through the intensity maximum, after a short smoothing window.
    """
    guide = index_map.material == GUIDING
    r_w = index_map.r_nodes()[:, None]
    e_r = float(np.sum(np.abs(profile.er[guide]) ** 2 * np.broadcast_to(r_w, guide.shape)[guide]))
    e_z = float(np.sum(np.abs(profile.ez[guide]) ** 2 * np.broadcast_to(r_w, guide.shape)[guide]))
    if e_r == 0 and e_z == 0:
        raise ValueError("profile carries no guiding-layer energy")
    if max(e_r, e_z) < hybrid_ratio * min(e_r, e_z):
        pol = "hybrid"
        dominant = profile.er if e_r >= e_z else profile.ez
    elif e_r > e_z:
        pol, dominant = "TE", profile.er
    else:
        pol, dominant = "TM", profile.ez

    inten = profile.intensity()
    _, j_max = np.unravel_index(np.argmax(inten), inten.shape)
    cut = dominant[:, j_max]
    if smooth > 1:
        kernel = np.ones(smooth) / smooth
        cut = np.convolve(cut, kernel, mode="same")
    # Rotate the global phase away, then count sign changes of the real part
    # where the amplitude is non-negligible.
    ref = cut[np.argmax(np.abs(cut))]
    line = (cut * np.conj(ref / abs(ref))).real if abs(ref) > 0 else cut.real
    keep = np.abs(line) > 0.03 * np.abs(line).max()
    signs = np.sign(line[keep])
    radial_order = int(np.sum(signs[:-1] * signs[1:] < 0))
    return pol, radial_order


@dataclass(frozen=True)
class ModeVolumeResult:
    v_bar: float
    eta: float
    r_o: tuple
    v_bar_standing: float


def mode_volume_and_eta(profile: ModeProfile, index_map: IndexMap,
                        n_ref: float | None = None) -> ModeVolumeResult:
    """Peak-normalized mode volume and diamond field overlap.

    V_bar = (lam/n_ref)^-3 Int n^2 |E|^2 dV / (n^2 |E|^2)|_ro with the
    axisymmetric volume weight 2 pi r dr dz and r_o the point maximizing
    n^2 |E|^2.  eta is the amplitude ratio max_diamond|E| / |E(r_o)|.  The
    traveling-wave volume is reported; the standing-wave value is half.
    """
    if profile.er.shape != index_map.eps.shape:
        raise ValueError("profile and index map grids differ")
    if not np.any(index_map.material == DIAMOND):
        raise ValueError("no diamond cells in the index map; eta undefined")
    eps = index_map.eps
    e2 = profile.intensity()
    weighted = eps * e2
    r = index_map.r_nodes()[:, None]
    integral = 2.0 * math.pi * float(np.sum(weighted * r)) * index_map.dr * index_map.dz
    i_o, j_o = np.unravel_index(np.argmax(weighted), weighted.shape)
    peak = weighted[i_o, j_o]
    if peak <= 0:
        raise ValueError("profile is identically zero")
    n_ref = float(n_ref if n_ref is not None else math.sqrt(eps.max()))
    v_bar = (integral / peak) / (profile.lam_um / n_ref) ** 3
    e_amp = np.sqrt(e2)
    dia = index_map.material == DIAMOND
    eta = float(e_amp[dia].max() / e_amp[i_o, j_o])
    r_o = (float(index_map.r_nodes()[i_o]), float(index_map.z_nodes()[j_o]))
    return ModeVolumeResult(v_bar=float(v_bar), eta=min(eta, 1.0), r_o=r_o,
                            v_bar_standing=float(0.5 * v_bar))


# -- spectral bookkeeping -----------------------------------------------------

def fsr_dispersion(modes) -> list:
    """Per-family FSR table from adjacent-m resonances.

    Returns rows (lam_mid_um, fsr_nm, family) for every consecutive-m pair;
    raises on gaps in m within a family.
    """
    families = {}
    for mode in modes:
        families.setdefault(mode.family, []).append(mode)
    rows = []
    for family in sorted(families):
        members = sorted(families[family], key=lambda mo: mo.m)
        if len(members) < 2:
            raise ValueError(f"family {family} has fewer than 2 modes")
        for lo, hi in zip(members[:-1], members[1:]):
            if hi.m != lo.m + 1:
                raise ValueError(
                    f"family {family} has an m gap between {lo.m} and {hi.m}")
            fsr_nm = (lo.lam_um - hi.lam_um) * 1e3
            rows.append((0.5 * (lo.lam_um + hi.lam_um), fsr_nm, family))
    return rows


def fsr_table_to_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("lam_um", "fsr_nm", "family"))
        for lam, fsr, family in rows:
            w.writerow((f"{lam:.8g}", f"{fsr:.6g}", family))


def q_budget(q_rad, q_i):
    """Total Q from 1/Q = 1/Q_rad + 1/Q_i (scalar or elementwise)."""
    q_rad = np.asarray(q_rad, dtype=float)
    q_i_arr = np.asarray(q_i, dtype=float)
    if np.any(q_rad <= 0) or np.any(q_i_arr <= 0):
        raise ValueError("q_budget inputs must be positive")
    total = 1.0 / (1.0 / q_rad + 1.0 / q_i_arr)
    return float(total) if total.ndim == 0 else total


# Dimensionless prefactor of the surface-scattering estimate, calibrated once
# against the 3 nm / 80 nm sidewall-roughness anchor of the thin etched
# device (Q_ss = 1.7e4) and frozen.
_ROUGHNESS_PREFACTOR = 1.685


def estimate_q_roughness(rough: RoughnessSpec, mode: ResonantMode,
                         geometry: DeviceGeometry, n_guiding: float = 3.25) -> float:
    """Volume-current (Rayleigh) estimate of the surface-scattering Q limit.

    Models the rough sidewall as uncorrelated polarization-current patches of
    volume ~ sigma * L_c * t and dielectric contrast (n_g^2 - 1) radiating
    into free space, normalized by the stored energy through the physical
    mode volume:

        Q_ss = C0 * V_mode * lam / ((n^2 - 1)^2 sigma^2 L_c t)

    which carries the exact 1/sigma^2 scaling of the scattered power.
    Returns +inf for a smooth wall (sigma = 0).
    """
    if mode.v_bar is None:
        raise ValueError("mode needs v_bar for the roughness estimate")
    if rough.sigma_nm == 0:
        return math.inf
    sigma = rough.sigma_nm * 1e-3
    corr = rough.corr_length_nm * 1e-3
    t = geometry.guiding_layer_thickness
    lam = mode.lam_um
    v_mode = mode.v_bar * (lam / n_guiding) ** 3
    contrast = (n_guiding ** 2 - 1.0) ** 2
    return _ROUGHNESS_PREFACTOR * v_mode * lam / (contrast * sigma ** 2 * corr * t)
