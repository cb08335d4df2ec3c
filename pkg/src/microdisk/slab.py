"""Fast analytic cross-checks for the FDTD engine.

Slab-waveguide effective indices (transfer matrix + bisection), approximate
whispering-gallery resonance positions and m-number estimates, the analytic
free-spectral-range formula, and closed-form PEC cylinder eigenfrequencies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import jn_zeros, jnp_zeros

from .device import MaterialModel, refractive_index

C_UM_THZ = 299.792458  # speed of light, um * THz

# First zeros of the Airy function Ai(-x); the p-th radial WGM order tracks
# the (p+1)-th zero in the asymptotic resonance condition.
_AIRY_ZEROS = (2.338107, 4.087949, 5.520560, 6.786708)


class NoRootError(ValueError):
    """Root search found no solution in the requested window."""


@dataclass(frozen=True)
class SlabStack:
    """Planar multilayer: outer layers semi-infinite, inner ones finite.

    layers is an ordered list of (MaterialModel | float index, thickness_um);
    the first and last thickness values are ignored (semi-infinite).
    """

    layers: tuple
    polarization: str

    def __post_init__(self):
        if len(self.layers) < 3:
            raise ValueError("SlabStack needs at least 3 layers")
        if self.polarization not in ("TE", "TM"):
            raise ValueError("polarization must be TE or TM")
        for _, d in self.layers[1:-1]:
            if d is None or d <= 0:
                raise ValueError("inner layer thicknesses must be positive")

    def indices(self, lam: float) -> np.ndarray:
        out = []
        for mat, _ in self.layers:
            if isinstance(mat, MaterialModel):
                out.append(refractive_index(mat, lam))
            else:
                out.append(float(mat))
        return np.asarray(out)

    def thicknesses(self) -> np.ndarray:
        return np.asarray([d if d is not None else 0.0 for _, d in self.layers])


@dataclass(frozen=True)
class SlabMode:
    n_eff: float
    n_g_eff: float
    order: int


def _dispersion_residual(n_eff, k0, n, d, tm):
    """Shooting residual; zero at a guided mode.

    Propagates (field, weighted derivative) from a decaying solution in the
    bottom half-space; the residual is the mismatch against decay in the top
    half-space.  Real arithmetic throughout the guided range.
    """
    w = n ** 2 if tm else np.ones_like(n)
    g_bot = k0 * math.sqrt(max(n_eff ** 2 - n[0] ** 2, 1e-300))
    g_top = k0 * math.sqrt(max(n_eff ** 2 - n[-1] ** 2, 1e-300))
    phi, psi = 1.0, g_bot / w[0]
    for j in range(1, len(n) - 1):
        q = k0 ** 2 * (n[j] ** 2 - n_eff ** 2)
        if q >= 0.0:
            kap = math.sqrt(q)
            s = math.sin(kap * d[j])
            c = math.cos(kap * d[j])
            sk = d[j] if kap == 0.0 else s / kap
            phi, psi = c * phi + w[j] * sk * psi, -(q / w[j]) * sk * phi + c * psi
        else:
            gam = math.sqrt(-q)
            ch = math.cosh(gam * d[j])
            sh = math.sinh(gam * d[j])
            phi, psi = ch * phi + (w[j] / gam) * sh * psi, (gam / w[j]) * sh * phi + ch * psi
        scale = max(abs(phi), abs(psi))
        if scale > 1e100:
            phi /= scale
            psi /= scale
    return psi + (g_top / w[-1]) * phi


def slab_neff(stack: SlabStack, lam: float, scan_points: int = 4000,
              with_group_index: bool = True) -> list[SlabMode]:
    """All guided modes of the stack at wavelength lam (um).

    Brackets sign changes of the dispersion residual on a fine n_eff scan
    over (max cladding index, max core index), then bisects each bracket.
    Returns modes sorted by decreasing n_eff (order 0 first); empty list when
    nothing is guided.
    """
    if lam <= 0:
        raise ValueError("wavelength must be positive")
    n = stack.indices(lam)
    d = stack.thicknesses()
    k0 = 2.0 * math.pi / lam
    tm = stack.polarization == "TM"
    lo = max(n[0], n[-1])
    hi = n[1:-1].max()
    if hi <= lo:
        return []
    eps = 1e-9 * (hi - lo)
    grid = np.linspace(lo + eps, hi - eps, scan_points)
    vals = np.array([_dispersion_residual(x, k0, n, d, tm) for x in grid])
    roots = []
    sign = np.sign(vals)
    for i in np.nonzero(sign[:-1] * sign[1:] < 0)[0]:
        root = brentq(_dispersion_residual, grid[i], grid[i + 1],
                      args=(k0, n, d, tm), xtol=1e-13)
        roots.append(root)
    roots.sort(reverse=True)
    modes = []
    for order, root in enumerate(roots):
        ng = _slab_group_index(stack, lam, root, order) if with_group_index else root
        modes.append(SlabMode(n_eff=root, n_g_eff=ng, order=order))
    return modes


def _slab_group_index(stack, lam, n_eff_at, order, step=2e-4):
    """n_g = n_eff - lam * dn_eff/dlam, tracking the mode order across lam."""
    samples = []
    for lm in (lam - step, lam + step):
        modes = slab_neff(stack, lm, with_group_index=False)
        if len(modes) <= order:
            return n_eff_at  # mode cuts off within the stencil; fall back
        samples.append(modes[order].n_eff)
    dneff = (samples[1] - samples[0]) / (2.0 * step)
    return n_eff_at - lam * dneff


def wgm_resonances(radius: float, n_eff, m_range, window=(0.4, 1.0)) -> list:
    """Solve m * lam = 2 pi R * n_eff(lam) for each m.

    n_eff is a callable of wavelength (um); returns [(m, lam_m)].  Raises
    NoRootError when no root lies inside the search window for some m.
    """
    lo, hi = window
    out = []
    for m in m_range:
        def f(lam, m=m):
            return 2.0 * math.pi * radius * n_eff(lam) - m * lam

        flo, fhi = f(lo), f(hi)
        if flo * fhi > 0:
            raise NoRootError(f"no resonance for m={m} in window {window}")
        out.append((m, brentq(f, lo, hi, xtol=1e-12)))
    return out


def wgm_resonances_corrected(radius: float, n_eff, m_range, radial_order: int = 0,
                             polarization: str = "TE", window=(0.4, 1.0)) -> list:
    """WGM positions including the first-order curvature (Airy) correction.

    Solves 2 pi R n_eff(lam)/lam = m + a_p (m/2)^(1/3) - P, where a_p is the
    (radial_order+1)-th Airy zero and P the polarization shift of the rim
    reflection.  This tracks the disk's radial mode families far better than
    the plain closed-wave condition and is what sweep seeding uses.
    """
    a_p = _AIRY_ZEROS[radial_order]
    lo, hi = window
    out = []
    for m in m_range:
        corr = m + a_p * (0.5 * m) ** (1.0 / 3.0)

        def f(lam, corr=corr):
            ne = n_eff(lam)
            pol = ne / math.sqrt(max(ne ** 2 - 1.0, 1e-12))
            if polarization == "TM":
                pol /= ne ** 2
            return 2.0 * math.pi * radius * ne / lam - pol - corr

        flo, fhi = f(lo), f(hi)
        if flo * fhi > 0:
            raise NoRootError(f"no corrected resonance for m={m} in window {window}")
        out.append((m, brentq(f, lo, hi, xtol=1e-12)))
    return out


def analytic_fsr(lam: float, radius: float, n_g: float) -> float:
    """Free spectral range lam^2 / (2 pi R n_g), returned in nm."""
    if lam <= 0 or radius <= 0 or n_g <= 0:
        raise ValueError("analytic_fsr arguments must be positive")
    return 1e3 * lam ** 2 / (2.0 * math.pi * radius * n_g)


def group_index_from_fsr(lam: float, radius: float, fsr_nm: float) -> float:
    """Invert analytic_fsr: the group index implied by a measured FSR."""
    if fsr_nm <= 0:
        raise ValueError("fsr must be positive")
    return 1e3 * lam ** 2 / (2.0 * math.pi * radius * fsr_nm)


def estimate_m(lam: float, radius: float, fsr_nm: float) -> int:
    """Azimuthal number estimate from a resonance's own FSR.

    Uses the closed-wave condition with n_eff approximated by the group
    index inferred from the FSR (n_eff ~ n_g), i.e. m ~ lam / FSR.  This is
    the standard way to label measured WGM families when only the spacing
    is known; it is exact only for dispersionless resonators.
    """
    n_g = group_index_from_fsr(lam, radius, fsr_nm)
    return int(round(2.0 * math.pi * radius * n_g / lam))


def pec_cylinder_modes(radius: float, height: float, indices, kind: str) -> float:
    """Eigenfrequency (THz) of a vacuum PEC cylinder mode.

    indices = (m, n, p): azimuthal, radial (n >= 1), axial.  TM modes allow
    p >= 0, TE modes require p >= 1.  nu = (c/2pi) sqrt((chi/a)^2 + (p pi/L)^2)
    with chi the n-th zero of J_m (TM) or J_m' (TE).
    """
    m, n, p = indices
    if radius <= 0 or height <= 0:
        raise ValueError("cavity dimensions must be positive")
    if m < 0 or n < 1:
        raise ValueError(f"invalid mode indices (m={m}, n={n})")
    if kind == "TM":
        if p < 0:
            raise ValueError("TM modes need p >= 0")
        chi = jn_zeros(m, n)[-1]
    elif kind == "TE":
        if p < 1:
            raise ValueError("TE modes need p >= 1")
        chi = jnp_zeros(m, n)[-1]
    else:
        raise ValueError("kind must be 'TM' or 'TE'")
    k = math.hypot(chi / radius, p * math.pi / height)
    return C_UM_THZ * k / (2.0 * math.pi)


def device_rim_stack(thickness: float, etch_depth: float, n_guiding=3.25,
                     n_diamond=2.42, polarization: str = "TE",
                     etched: bool = True) -> SlabStack:
    """1D reduction of the disk cross-section at the rim.

    Etched devices reduce to air / guiding layer / diamond pedestal / air;
    unetched ones to air / guiding layer / semi-infinite diamond.
    """
    if etched and etch_depth > 0:
        layers = ((1.0, None), (n_guiding, thickness), (n_diamond, etch_depth), (1.0, None))
    else:
        layers = ((1.0, None), (n_guiding, thickness), (n_diamond, None))
    return SlabStack(layers=layers, polarization=polarization)
