"""Body-of-revolution FDTD engine on an (r, z) Yee half-plane.

Fields carry an imposed exp(i m phi) azimuthal dependence that is removed
analytically, leaving complex-valued 2D arrays; the azimuthal derivatives
become algebraic i*m/r couplings between the in-plane and azimuthal
components.  Internally c = 1, eps0 = mu0 = 1, lengths are in um, so one
time unit is um/c and the simulation frequency of a vacuum wavelength
lambda is 1/lambda.  Public interfaces quote frequency in THz and time in
ps (1 um/c = 1/299.792458 ps).

Grid staggering, with integer radii r_i = r_min + i dr and half radii
r_(i+1/2):

    Er  (i+1/2, j)      Hr  (i, j+1/2)
    Ep  (i,     j)      Hp  (i+1/2, j+1/2)
    Ez  (i, j+1/2)      Hz  (i+1/2, j)

Tangential E on untouched domain edges stays zero, i.e. every boundary is
a perfect electric conductor unless a CPML face is configured in front of
it.  The inner radial boundary is always PEC (high-m whispering-gallery
fields are negligible there); r_min = 0 is supported for m = 0 only, with
the standard on-axis update for Ez.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .device import IndexMap

try:
    from . import _kernels
except ImportError:  # pragma: no cover - numba always present in practice
    _kernels = None

C_UM_THZ = 299.792458  # c in um/ps = um*THz

_E_COMPONENTS = ("er", "ephi", "ez")
_H_COMPONENTS = ("hr", "hphi", "hz")


class StabilityError(RuntimeError):
    """Time step violates the von Neumann bound for this configuration."""


class ConfigurationError(ValueError):
    """Source or probe placement / parameter contract violated."""


@dataclass(frozen=True)
class PmlSpec:
    """Stretched-coordinate convolutional PML parameters."""

    cells: int = 12
    order: int = 3
    r_target: float = 1e-6
    kappa_max: float = 1.0
    alpha_max: float = 0.05
    faces: tuple = ("r_max", "z_min", "z_max")


@dataclass(frozen=True)
class SourceSpec:
    """Point electric dipole current with a Gaussian pulse envelope.

    width_thz is the RMS spectral width of the pulse; the envelope peaks at
    t0 = 5/(2 pi width) and the source is switched off at 2 t0, where the
    residual envelope is exp(-12.5) of peak.
    """

    r: float
    z: float
    component: str = "er"
    center_thz: float = 470.0
    width_thz: float = 15.0
    amplitude: complex = 1.0 + 0.0j
    conjugate: bool = False

    def __post_init__(self):
        if self.component not in _E_COMPONENTS:
            raise ConfigurationError(f"source component must be one of {_E_COMPONENTS}")
        if self.center_thz <= 0 or self.width_thz <= 0:
            raise ConfigurationError("source center/width must be positive")

    @property
    def tau(self) -> float:
        """Envelope RMS width in simulation time units (um/c)."""
        return C_UM_THZ / (2.0 * math.pi * self.width_thz)

    @property
    def t_off(self) -> float:
        return 10.0 * self.tau

    def waveform(self, t):
        """Complex analytic-signal current at simulation time t.

        With conjugate set, the fully conjugated current is emitted; by the
        realness of the update operator (up to the sign involution on the
        azimuthal-coupled components), this drives the conjugated fields.
        """
        if t >= self.t_off:
            return 0.0j
        t0 = 5.0 * self.tau
        nu = self.center_thz / C_UM_THZ
        env = math.exp(-0.5 * ((t - t0) / self.tau) ** 2)
        value = self.amplitude * env * np.exp(-2j * math.pi * nu * (t - t0))
        return np.conj(value) if self.conjugate else value


@dataclass(frozen=True)
class Probe:
    name: str
    r: float
    z: float
    component: str = "ez"

    def __post_init__(self):
        if self.component not in _E_COMPONENTS + _H_COMPONENTS:
            raise ConfigurationError(f"unknown probe component {self.component!r}")


@dataclass(frozen=True)
class SimConfig:
    m: int
    index_map: IndexMap
    source: SourceSpec
    probes: tuple = ()
    pml: PmlSpec = field(default_factory=PmlSpec)
    courant: float = 0.5
    total_steps: int = 20000
    record_interval: int = 1

    def __post_init__(self):
        if self.m < 0:
            raise ConfigurationError("m must be non-negative")
        if self.m > 0 and self.index_map.r0 <= 0:
            raise ConfigurationError("m > 0 requires an annular domain (r_min > 0)")
        if not 0 < self.courant < 1:
            raise ConfigurationError("courant factor must lie in (0, 1)")

    @property
    def dt(self) -> float:
        """Leapfrog step: courant * min(dr, dz) with the m/r safeguard."""
        im = self.index_map
        base = self.courant * min(im.dr, im.dz)
        if self.m > 0:
            base /= max(1.0, self.m * im.dr / im.r0)
        return base

    def stability_limit(self) -> float:
        """Von Neumann bound on dt including the m/r stiffness at r_min."""
        im = self.index_map
        w2 = (2.0 / im.dr) ** 2 + (2.0 / im.dz) ** 2
        if self.m > 0:
            w2 += (self.m / im.r0) ** 2
        return 2.0 / math.sqrt(w2)


@dataclass
class TimeSeries:
    """Complex probe samples at a uniform interval (public units: ps)."""

    probe: str
    component: str
    t0_ps: float
    dt_ps: float
    samples: np.ndarray

    def times_ps(self) -> np.ndarray:
        return self.t0_ps + self.dt_ps * np.arange(len(self.samples))

    def to_csv(self, path):
        data = np.column_stack([self.times_ps(), self.samples.real, self.samples.imag])
        np.savetxt(path, data, delimiter=",", header="t_ps,re,im", comments="")


@dataclass
class ModeProfile:
    """Complex E-field components co-located on the grid nodes."""

    lam_um: float
    m: int
    er: np.ndarray
    ephi: np.ndarray
    ez: np.ndarray
    dr: float
    dz: float
    r0: float
    z0: float
    normalization: str = "traveling-wave"

    def intensity(self) -> np.ndarray:
        return np.abs(self.er) ** 2 + np.abs(self.ephi) ** 2 + np.abs(self.ez) ** 2

    def r_nodes(self) -> np.ndarray:
        return self.r0 + self.dr * np.arange(self.er.shape[0])

    def z_nodes(self) -> np.ndarray:
        return self.z0 + self.dz * np.arange(self.er.shape[1])

    def save_npz(self, path):
        np.savez_compressed(
            path, lam_um=self.lam_um, m=self.m, dr=self.dr, dz=self.dz,
            r0=self.r0, z0=self.z0, er=self.er, ephi=self.ephi, ez=self.ez,
            normalization=self.normalization)

    @classmethod
    def load_npz(cls, path):
        d = np.load(path)
        return cls(lam_um=float(d["lam_um"]), m=int(d["m"]), er=d["er"],
                   ephi=d["ephi"], ez=d["ez"], dr=float(d["dr"]), dz=float(d["dz"]),
                   r0=float(d["r0"]), z0=float(d["z0"]),
                   normalization=str(d["normalization"]))

    def save_csv(self, path):
        r = np.repeat(self.r_nodes(), self.er.shape[1])
        z = np.tile(self.z_nodes(), self.er.shape[0])
        cols = [r, z]
        for comp in (self.er, self.ephi, self.ez):
            cols += [comp.real.ravel(), comp.imag.ravel()]
        np.savetxt(path, np.column_stack(cols), delimiter=",",
                   header="r_um,z_um,er_re,er_im,ephi_re,ephi_im,ez_re,ez_im",
                   comments="")


class _PmlProfile:
    """Per-axis CPML recursion coefficients at node and half positions."""

    def __init__(self, n_nodes, delta, dt, spec: PmlSpec, lo: bool, hi: bool):
        self.b_n, self.a_n, self.ik_n = self._build(n_nodes, 0.0, delta, dt, spec, lo, hi)
        self.b_h, self.a_h, self.ik_h = self._build(n_nodes, 0.5, delta, dt, spec, lo, hi)

    @staticmethod
    def _build(n_nodes, offset, delta, dt, spec, lo, hi):
        pos = np.arange(n_nodes) + offset
        depth = np.zeros(n_nodes)
        if spec.cells <= 0 or not (lo or hi):
            return np.ones(n_nodes), np.zeros(n_nodes), np.ones(n_nodes)
        if lo:
            depth = np.maximum(depth, (spec.cells - pos) / spec.cells)
        if hi:
            depth = np.maximum(depth, (pos - (n_nodes - 1 - spec.cells)) / spec.cells)
        depth = np.clip(depth, 0.0, 1.0)
        sigma_max = (spec.order + 1) * (-math.log(spec.r_target)) / (2.0 * spec.cells * delta)
        sigma = sigma_max * depth ** spec.order
        kap = 1.0 + (spec.kappa_max - 1.0) * depth ** spec.order
        alpha = spec.alpha_max * (1.0 - depth) * (depth > 0)
        b = np.exp(-(sigma / kap + alpha) * dt)
        denom = sigma * kap + kap ** 2 * alpha
        a = np.where(sigma > 0, sigma * (b - 1.0) / np.where(denom > 0, denom, 1.0), 0.0)
        return b, a, 1.0 / kap


class SimState:
    """Mutable field state of one simulation run."""

    def __init__(self, config: SimConfig):
        im = config.index_map
        nr, nz = im.eps.shape[0] - 1, im.eps.shape[1] - 1
        shape = (nr + 1, nz + 1)
        self.nr, self.nz = nr, nz
        self.step_index = 0
        self.t = 0.0
        for name in _E_COMPONENTS + _H_COMPONENTS:
            setattr(self, name, np.zeros(shape, dtype=np.complex128))
        # CPML auxiliary (recursive convolution) fields
        for name in ("psi_er_z", "psi_ep_z", "psi_ep_r", "psi_ez_r",
                     "psi_hr_z", "psi_hp_z", "psi_hp_r", "psi_hz_r"):
            setattr(self, name, np.zeros(shape, dtype=np.complex128))
        self.track_energy = False
        self.last_energy = None
        self.nan_checks = False

    def component(self, name: str) -> np.ndarray:
        return getattr(self, name)


class Simulation:
    """Precomputed update coefficients plus the stepping loop.

    Stepping runs through the numba kernels by default; backend="numpy"
    selects the vectorized reference implementation (identical arithmetic,
    used by the backend-equivalence test).
    """

    def __init__(self, config: SimConfig, backend: str | None = None):
        if backend is None:
            backend = "numba" if _kernels is not None else "numpy"
        if backend == "numba" and _kernels is None:
            raise ConfigurationError("numba backend requested but unavailable")
        self.backend = backend
        self.config = config
        im = config.index_map
        dt = config.dt
        limit = config.stability_limit()
        if dt > limit * (1.0 - 1e-12):
            raise StabilityError(
                f"dt = {dt:.4g} exceeds the von Neumann bound {limit:.4g} "
                f"(courant {config.courant}, m = {config.m})")
        self.dt = dt
        self.dr, self.dz = im.dr, im.dz
        nr, nz = im.eps.shape[0] - 1, im.eps.shape[1] - 1
        self.nr, self.nz = nr, nz

        self.rn = im.r0 + im.dr * np.arange(nr + 1)
        self.rh = im.r0 + im.dr * (np.arange(nr + 1) + 0.5)
        with np.errstate(divide="ignore"):
            self.inv_rn = np.where(self.rn > 0, 1.0 / np.where(self.rn > 0, self.rn, 1.0), 0.0)
        self.inv_rh = 1.0 / self.rh

        eps = im.eps
        eps_r = eps.copy()
        eps_r[:-1, :] = 0.5 * (eps[:-1, :] + eps[1:, :])
        eps_z = eps.copy()
        eps_z[:, :-1] = 0.5 * (eps[:, :-1] + eps[:, 1:])
        self.ce_r = dt / eps_r
        self.ce_p = dt / eps
        self.ce_z = dt / eps_z

        pml = config.pml
        if pml.cells > 0:
            if "r_max" in pml.faces and 2 * pml.cells >= nr:
                raise ConfigurationError("radial PML thicker than half the grid")
            z_faces = sum(f in pml.faces for f in ("z_min", "z_max"))
            if z_faces and z_faces * pml.cells >= nz:
                raise ConfigurationError("axial PML thicker than the grid")
        self.pr = _PmlProfile(nr + 1, im.dr, dt, pml,
                              lo=False, hi="r_max" in pml.faces)
        self.pz = _PmlProfile(nz + 1, im.dz, dt, pml,
                              lo="z_min" in pml.faces, hi="z_max" in pml.faces)

        self.src_idx = self._locate(config.source.r, config.source.z,
                                    config.source.component, "source")
        self.probe_idx = [
            (p, self._locate(p.r, p.z, p.component, f"probe {p.name!r}"))
            for p in config.probes]

    def _locate(self, r, z, component, what):
        im = self.config.index_map
        half_r = component in ("er", "hphi", "hz")
        half_z = component in ("ez", "hr", "hphi")
        i = int(round((r - im.r0) / im.dr - (0.5 if half_r else 0.0)))
        j = int(round((z - im.z0) / im.dz - (0.5 if half_z else 0.0)))
        if not (0 <= i <= self.nr and 0 <= j <= self.nz):
            raise ConfigurationError(f"{what} at (r={r}, z={z}) is outside the grid")
        margin = self.config.pml.cells + 2
        faces = self.config.pml.faces
        if ("r_max" in faces and i > self.nr - margin) or \
           ("z_min" in faces and j < margin) or \
           ("z_max" in faces and j > self.nz - margin):
            raise ConfigurationError(f"{what} lies inside the PML region")
        return i, j

    # -- single leapfrog step -------------------------------------------------

    def step(self, state: SimState):
        """Advance fields one time step (H half-step, then E full step)."""
        if state.track_energy:
            # The conserved quadratic form pairs H across the half-step, so
            # energy tracking runs the reference path regardless of backend.
            h_prev = (state.hr.copy(), state.hphi.copy(), state.hz.copy())
            self._update_h(state)
            state.last_energy = self._energy(state, h_prev)
            self._update_e(state)
        elif self.backend == "numba":
            self._step_kernels(state)
        else:
            self._update_h(state)
            self._update_e(state)
        self._inject_source(state)
        state.step_index += 1
        state.t += self.dt
        if state.nan_checks and not np.isfinite(state.ez).all():
            raise StabilityError(f"NaN detected at step {state.step_index}")

    def _step_kernels(self, state):
        pr, pz = self.pr, self.pz
        m = self.config.m
        _kernels.update_h(
            state.er, state.ephi, state.ez, state.hr, state.hphi, state.hz,
            state.psi_hr_z, state.psi_hp_z, state.psi_hp_r, state.psi_hz_r,
            self.rn, self.rh, self.inv_rn, self.inv_rh,
            pz.b_h, pz.a_h, pz.ik_h, pr.b_h, pr.a_h, pr.ik_h,
            m, self.dt, self.dr, self.dz, self.nr, self.nz)
        _kernels.update_e(
            state.er, state.ephi, state.ez, state.hr, state.hphi, state.hz,
            state.psi_er_z, state.psi_ep_z, state.psi_ep_r, state.psi_ez_r,
            self.ce_r, self.ce_p, self.ce_z,
            self.rn, self.rh, self.inv_rn, self.inv_rh,
            pz.b_n, pz.a_n, pz.ik_n, pr.b_n, pr.a_n, pr.ik_n,
            m, self.dr, self.dz, self.nr, self.nz,
            self.config.index_map.r0 == 0.0)

    def _update_h(self, state):
        dt, dr, dz = self.dt, self.dr, self.dz
        nr, nz = self.nr, self.nz
        m = self.config.m
        pr, pz = self.pr, self.pz

        # Hr (i, j+1/2): -dt * (i m/r Ez - dEp/dz)
        d = (state.ephi[:, 1:nz + 1] - state.ephi[:, 0:nz]) / dz
        psi = state.psi_hr_z[:, 0:nz]
        psi *= pz.b_h[None, 0:nz]
        psi += pz.a_h[None, 0:nz] * d
        term = d * pz.ik_h[None, 0:nz] + psi
        if m:
            term -= 1j * m * self.inv_rn[:, None] * state.ez[:, 0:nz]
        state.hr[:, 0:nz] += dt * term

        # Hp (i+1/2, j+1/2): -dt * (dEr/dz - dEz/dr)
        dzt = (state.er[0:nr, 1:nz + 1] - state.er[0:nr, 0:nz]) / dz
        psi = state.psi_hp_z[0:nr, 0:nz]
        psi *= pz.b_h[None, 0:nz]
        psi += pz.a_h[None, 0:nz] * dzt
        t1 = dzt * pz.ik_h[None, 0:nz] + psi

        drt = (state.ez[1:nr + 1, 0:nz] - state.ez[0:nr, 0:nz]) / dr
        psi = state.psi_hp_r[0:nr, 0:nz]
        psi *= pr.b_h[0:nr, None]
        psi += pr.a_h[0:nr, None] * drt
        t2 = drt * pr.ik_h[0:nr, None] + psi
        state.hphi[0:nr, 0:nz] -= dt * (t1 - t2)

        # Hz (i+1/2, j): -dt * ((1/r) d(r Ep)/dr - i m/r Er)
        drt = (self.rn[1:nr + 1, None] * state.ephi[1:nr + 1, :]
               - self.rn[0:nr, None] * state.ephi[0:nr, :]) / (self.rh[0:nr, None] * dr)
        psi = state.psi_hz_r[0:nr, :]
        psi *= pr.b_h[0:nr, None]
        psi += pr.a_h[0:nr, None] * drt
        term = drt * pr.ik_h[0:nr, None] + psi
        if m:
            term -= 1j * m * self.inv_rh[0:nr, None] * state.er[0:nr, :]
        state.hz[0:nr, :] -= dt * term

    def _update_e(self, state):
        dt, dr, dz = self.dt, self.dr, self.dz
        nr, nz = self.nr, self.nz
        m = self.config.m
        pr, pz = self.pr, self.pz
        on_axis = self.config.index_map.r0 == 0.0

        # Er (i+1/2, j): +dt/eps * (i m/r Hz - dHp/dz)
        d = (state.hphi[0:nr, 1:nz] - state.hphi[0:nr, 0:nz - 1]) / dz
        psi = state.psi_er_z[0:nr, 1:nz]
        psi *= pz.b_n[None, 1:nz]
        psi += pz.a_n[None, 1:nz] * d
        term = -(d * pz.ik_n[None, 1:nz] + psi)
        if m:
            term += 1j * m * self.inv_rh[0:nr, None] * state.hz[0:nr, 1:nz]
        state.er[0:nr, 1:nz] += self.ce_r[0:nr, 1:nz] * term

        # Ep (i, j): +dt/eps * (dHr/dz - dHz/dr)
        dzt = (state.hr[1:nr, 1:nz] - state.hr[1:nr, 0:nz - 1]) / dz
        psi = state.psi_ep_z[1:nr, 1:nz]
        psi *= pz.b_n[None, 1:nz]
        psi += pz.a_n[None, 1:nz] * dzt
        t1 = dzt * pz.ik_n[None, 1:nz] + psi

        drt = (state.hz[1:nr, 1:nz] - state.hz[0:nr - 1, 1:nz]) / dr
        psi = state.psi_ep_r[1:nr, 1:nz]
        psi *= pr.b_n[1:nr, None]
        psi += pr.a_n[1:nr, None] * drt
        t2 = drt * pr.ik_n[1:nr, None] + psi
        state.ephi[1:nr, 1:nz] += self.ce_p[1:nr, 1:nz] * (t1 - t2)

        # Ez (i, j+1/2): +dt/eps * ((1/r) d(r Hp)/dr - i m/r Hr)
        drt = (self.rh[1:nr, None] * state.hphi[1:nr, 0:nz]
               - self.rh[0:nr - 1, None] * state.hphi[0:nr - 1, 0:nz]) \
            / (self.rn[1:nr, None] * dr)
        psi = state.psi_ez_r[1:nr, 0:nz]
        psi *= pr.b_n[1:nr, None]
        psi += pr.a_n[1:nr, None] * drt
        term = drt * pr.ik_n[1:nr, None] + psi
        if m:
            term -= 1j * m * self.inv_rn[1:nr, None] * state.hr[1:nr, 0:nz]
        state.ez[1:nr, 0:nz] += self.ce_z[1:nr, 0:nz] * term

        if on_axis and m == 0:
            # Ampere's law on the axis cell: contour integral of Hp around
            # the disk of radius dr/2 drives Ez(0).
            state.ez[0, 0:nz] += self.ce_z[0, 0:nz] * (4.0 / dr) * state.hphi[0, 0:nz]

    def _inject_source(self, state):
        src = self.config.source
        value = src.waveform(state.t + 0.5 * self.dt)
        if value != 0.0:
            i, j = self.src_idx
            comp = state.component(src.component)
            eps_coeff = {"er": self.ce_r, "ephi": self.ce_p, "ez": self.ce_z}[src.component]
            comp[i, j] -= eps_coeff[i, j] * value

    # -- diagnostics ----------------------------------------------------------

    def _energy(self, state, h_prev):
        """Discrete EM energy; exactly conserved in closed lossless runs.

        Uses the time-staggered product for H (the conserved leapfrog
        quadratic form) with the axisymmetric radial weights.
        """
        wn = self.rn[:, None]
        wh = self.rh[:, None]
        e_part = (np.sum(wh * (self.dt / self.ce_r) * np.abs(state.er) ** 2)
                  + np.sum(wn * (self.dt / self.ce_p) * np.abs(state.ephi) ** 2)
                  + np.sum(wn * (self.dt / self.ce_z) * np.abs(state.ez) ** 2))
        hr0, hp0, hz0 = h_prev
        h_part = (np.sum(wn * (np.conj(hr0) * state.hr).real)
                  + np.sum(wh * (np.conj(hp0) * state.hphi).real)
                  + np.sum(wh * (np.conj(hz0) * state.hz).real))
        return 0.5 * (e_part + h_part) * self.dr * self.dz


def init_simulation(config: SimConfig) -> tuple[Simulation, SimState]:
    """Validate the configuration and return (engine, zeroed state)."""
    sim = Simulation(config)
    return sim, SimState(config)


def run_ringdown(config: SimConfig) -> dict:
    """Run the full simulation, recording probes after source turn-off.

    Returns {probe_name: TimeSeries} with complex samples every
    record_interval steps.
    """
    if not config.probes:
        raise ConfigurationError("run_ringdown needs at least one probe")
    sim, state = init_simulation(config)
    t_off = config.source.t_off
    if t_off >= config.total_steps * sim.dt:
        raise ConfigurationError(
            f"source turn-off at t = {t_off:.1f} um/c is beyond the run "
            f"({config.total_steps} steps of {sim.dt:.4g})")
    records = {p.name: [] for p in config.probes}
    t_first = None
    for _ in range(config.total_steps):
        sim.step(state)
        if state.t >= t_off and state.step_index % config.record_interval == 0:
            if t_first is None:
                t_first = state.t
            for probe, (i, j) in sim.probe_idx:
                records[probe.name].append(state.component(probe.component)[i, j])
    out = {}
    dt_ps = sim.dt * config.record_interval / C_UM_THZ
    for probe, _ in sim.probe_idx:
        out[probe.name] = TimeSeries(
            probe=probe.name, component=probe.component,
            t0_ps=(t_first or 0.0) / C_UM_THZ, dt_ps=dt_ps,
            samples=np.asarray(records[probe.name]))
    return out


def accumulate_profile(config: SimConfig, nu_target_thz: float,
                       accumulate_steps: int | None = None,
                       known_resonances_thz=()) -> ModeProfile:
    """Discrete-Fourier field accumulation at one frequency.

    Runs the source phase, then accumulates A += E * exp(+2 pi i nu t) dt
    over the post-source window for the three E components.  The result is
    peak-normalized (traveling-wave convention) and co-located on the grid
    nodes.  If known_resonances_thz contains a second resonance within the
    window's DFT bandwidth, a contamination warning is emitted.
    """
    sim, state = init_simulation(config)
    dt = sim.dt
    n_source = int(math.ceil(config.source.t_off / dt))
    n_accum = accumulate_steps if accumulate_steps is not None else config.total_steps
    window_t = n_accum * dt
    bw_thz = 3.0 * C_UM_THZ / window_t
    close = [nu for nu in known_resonances_thz
             if nu_target_thz - bw_thz < nu < nu_target_thz + bw_thz
             and abs(nu - nu_target_thz) > 1e-9]
    if close:
        warnings.warn(
            f"resonances {close} THz fall within the DFT bandwidth "
            f"({bw_thz:.2f} THz) of the target {nu_target_thz} THz; "
            "the accumulated profile may be contaminated", stacklevel=2)

    for _ in range(n_source):
        sim.step(state)

    nu_sim = nu_target_thz / C_UM_THZ
    acc = {name: np.zeros_like(state.er) for name in _E_COMPONENTS}
    for _ in range(n_accum):
        sim.step(state)
        phase = np.exp(2j * math.pi * nu_sim * state.t) * dt
        for name in _E_COMPONENTS:
            acc[name] += state.component(name) * phase

    er = _colocate_r(acc["er"])
    ez = _colocate_z(acc["ez"])
    ephi = acc["ephi"].copy()
    peak = max(np.abs(er).max(), np.abs(ephi).max(), np.abs(ez).max())
    if peak > 0:
        for arr in (er, ephi, ez):
            arr /= peak
    im = config.index_map
    return ModeProfile(lam_um=C_UM_THZ / nu_target_thz, m=config.m,
                       er=er, ephi=ephi, ez=ez, dr=im.dr, dz=im.dz,
                       r0=im.r0, z0=im.z0)


def _colocate_r(arr):
    """Average a half-r staggered array onto integer r nodes."""
    out = np.zeros_like(arr)
    out[1:-1, :] = 0.5 * (arr[0:-2, :] + arr[1:-1, :])
    out[0, :] = arr[0, :]
    out[-1, :] = arr[-2, :]
    return out


def _colocate_z(arr):
    out = np.zeros_like(arr)
    out[:, 1:-1] = 0.5 * (arr[:, 0:-2] + arr[:, 1:-1])
    out[:, 0] = arr[:, 0]
    out[:, -1] = arr[:, -2]
    return out


def pec_box_config(index_map: IndexMap, m: int, source: SourceSpec,
                   probes=(), **kwargs) -> SimConfig:
    """Convenience: fully closed PEC domain (no PML faces)."""
    return SimConfig(m=m, index_map=index_map, source=source, probes=tuple(probes),
                     pml=PmlSpec(cells=0, faces=()), **kwargs)
