"""Engine validation against analytic electromagnetics.

The closed-cavity, propagation and absorption checks here are fast; the
full disk-resonator reproductions live in test_acceptance.py.
"""

import math

import numpy as np
import pytest

from microdisk import device, fdtd
from microdisk.device import GridSpec, uniform_index_map
from microdisk.fdtd import (ConfigurationError, ModeProfile, PmlSpec, Probe,
                            SimConfig, SimState, Simulation, SourceSpec,
                            StabilityError, accumulate_profile, init_simulation,
                            pec_box_config, run_ringdown)
from microdisk.modes import harmonic_inversion

C = 299.792458
TM010_THZ = 2.404826 * C / (2 * math.pi)  # a = 1 um vacuum cylinder


def pec_cylinder_config(cells_per_radius, steps=9000, m=0):
    a, height = 1.0, 0.5
    dr = a / cells_per_radius
    dz = height / max(4, round(height / dr))
    grid = GridSpec(dr=dr, dz=dz, r_min=0.0, r_max=a, z_min=0.0, z_max=height)
    imap = uniform_index_map(grid, 1.0)
    src = SourceSpec(r=0.45 * a, z=0.27 * height, component="ez",
                     center_thz=115.0, width_thz=55.0)
    probe = Probe("p", r=0.62 * a, z=0.6 * height, component="ez")
    return pec_box_config(imap, m=m, source=src, probes=[probe], total_steps=steps)


def dominant_frequency(cfg, band):
    series = run_ringdown(cfg)["p"]
    comps = harmonic_inversion(series, band, max_components=4)
    return comps[0].nu_thz


class TestStability:
    def annulus(self, dr=0.005):
        grid = GridSpec(dr=dr, dz=dr, r_min=0.5, r_max=1.5, z_min=0.0, z_max=0.5)
        return uniform_index_map(grid, 1.0)

    def test_init_zeroed(self):
        imap = self.annulus()
        cfg = pec_box_config(imap, m=5, source=SourceSpec(1.0, 0.25, "er"))
        sim, state = init_simulation(cfg)
        assert state.step_index == 0
        for name in ("er", "ephi", "ez", "hr", "hphi", "hz"):
            assert np.all(state.component(name) == 0)

    def test_high_courant_high_m_rejected(self):
        # Oracle: the von Neumann bound including the m/r term.  At m = 80,
        # r_min = 0.5 and dr = 5 nm, courant 0.99 exceeds it.
        imap = self.annulus()
        cfg = pec_box_config(imap, m=80, source=SourceSpec(1.0, 0.25, "er"),
                             courant=0.99)
        assert cfg.dt > cfg.stability_limit()
        with pytest.raises(StabilityError, match="von Neumann"):
            init_simulation(cfg)

    def test_default_courant_stable(self):
        imap = self.annulus()
        cfg = pec_box_config(imap, m=80, source=SourceSpec(1.0, 0.25, "er"))
        assert cfg.dt < cfg.stability_limit()
        init_simulation(cfg)

    def test_unstable_run_actually_diverges(self):
        # the bound is sharp: rescale dt just past it (no valid config can,
        # so adjust the compiled coefficients directly) and watch it blow up
        imap = self.annulus(dr=0.01)
        cfg = pec_box_config(imap, m=0, source=SourceSpec(1.0, 0.25, "er",
                                                          center_thz=400.0,
                                                          width_thz=80.0),
                             courant=0.65)
        sim, state = init_simulation(cfg)
        factor = 1.02 * cfg.stability_limit() / sim.dt
        sim.dt *= factor
        sim.ce_r *= factor
        sim.ce_p *= factor
        sim.ce_z *= factor
        state.nan_checks = True
        with pytest.raises(StabilityError, match="NaN"):
            for _ in range(6000):
                sim.step(state)

    def test_probe_in_pml_rejected(self):
        grid = GridSpec(dr=0.02, dz=0.02, r_min=0.5, r_max=2.0, z_min=0.0,
                        z_max=1.5)
        imap = uniform_index_map(grid, 1.0)
        src = SourceSpec(1.0, 0.75, "er")
        cfg = SimConfig(m=1, index_map=imap, source=src,
                        probes=(Probe("bad", 1.9, 0.75, "er"),))
        with pytest.raises(ConfigurationError, match="PML"):
            init_simulation(cfg)

    def test_m_needs_annulus(self):
        grid = GridSpec(dr=0.02, dz=0.02, r_min=0.0, r_max=1.0, z_min=0.0,
                        z_max=0.5)
        imap = uniform_index_map(grid, 1.0)
        with pytest.raises(ConfigurationError, match="annular"):
            SimConfig(m=3, index_map=imap, source=SourceSpec(0.5, 0.25, "er"))


class TestPecCylinder:
    def test_tm010_within_one_percent_at_20_cells_per_lambda(self):
        # lambda = 2.61 um; 8 cells per radius is 20.9 cells per wavelength
        nu = dominant_frequency(pec_cylinder_config(8), (60.0, 180.0))
        assert abs(nu / TM010_THZ - 1) < 0.01

    def test_second_order_convergence(self):
        errors = []
        for cells in (8, 16, 32):
            nu = dominant_frequency(pec_cylinder_config(cells), (60.0, 180.0))
            errors.append(abs(nu / TM010_THZ - 1))
        order1 = math.log2(errors[0] / errors[1])
        order2 = math.log2(errors[1] / errors[2])
        assert order1 > 1.7
        assert order2 > 1.7


class TestEnergyConservation:
    def test_closed_lossless_drift(self):
        grid = GridSpec(dr=0.02, dz=0.02, r_min=0.5, r_max=1.1, z_min=0.0,
                        z_max=0.6)
        imap = uniform_index_map(grid, 1.5)
        src = SourceSpec(0.8, 0.3, "ez", center_thz=300.0, width_thz=100.0)
        cfg = pec_box_config(imap, m=3, source=src)
        sim, state = init_simulation(cfg)
        for _ in range(int(np.ceil(src.t_off / sim.dt))):
            sim.step(state)
        state.track_energy = True
        sim.step(state)
        w0 = state.last_energy
        state.track_energy = False
        for _ in range(10000):
            sim.step(state)
        state.track_energy = True
        sim.step(state)
        assert abs(state.last_energy - w0) / w0 <= 1e-10


class TestPropagation:
    """Thin-gap coax carries a single TEM wave below the radial-mode cutoff."""

    def coax(self, n_med, z_max, courant=0.65, dr=0.025):
        grid = GridSpec(dr=dr, dz=0.025, r_min=5.0, r_max=5.2, z_min=0.0,
                        z_max=z_max)
        imap = uniform_index_map(grid, n_med)
        nu = C  # 1 um vacuum wavelength
        src = SourceSpec(r=5.1, z=2.0, component="er", center_thz=nu,
                         width_thz=nu / 6)
        return imap, src, courant

    def record(self, imap, src, courant, probes, t_total):
        cfg = SimConfig(m=0, index_map=imap, source=src, probes=probes,
                        pml=PmlSpec(faces=("z_min", "z_max")), total_steps=1,
                        courant=courant)
        sim, state = init_simulation(cfg)
        recs = [[] for _ in probes]
        for _ in range(int(t_total / sim.dt)):
            sim.step(state)
            for k, (_, idx) in enumerate(sim.probe_idx):
                recs[k].append(state.er[idx])
        return [np.asarray(r) for r in recs], sim.dt

    @staticmethod
    def centroid_time(rec, dt):
        p = np.abs(rec) ** 2
        return float(np.sum(np.arange(len(p)) * p) / p.sum()) * dt

    def test_vacuum_speed_within_one_percent_at_20_cells(self):
        imap, src, courant = self.coax(1.0, 30.0)
        (ra, rb), dt = self.record(
            imap, src, courant,
            (Probe("a", 5.1, 8.0, "er"), Probe("b", 5.1, 20.0, "er")), 40.0)
        v = 12.0 / (self.centroid_time(rb, dt) - self.centroid_time(ra, dt))
        assert abs(v - 1.0) < 0.01

    def test_dielectric_speed_c_over_n(self):
        # c/n physics at 40 cells per material wavelength (the leapfrog
        # stencil's own group-velocity error dominates at 20 cells when the
        # time step is vacuum-limited)
        grid = GridSpec(dr=0.0125, dz=0.0125, r_min=5.0, r_max=5.2, z_min=0.0,
                        z_max=18.0)
        imap = uniform_index_map(grid, 2.0)
        src = SourceSpec(r=5.1, z=1.5, component="er", center_thz=C,
                         width_thz=C / 6)
        (ra, rb), dt = self.record(
            imap, src, 0.65,
            (Probe("a", 5.1, 5.0, "er"), Probe("b", 5.1, 12.0, "er")), 45.0)
        v = 7.0 / (self.centroid_time(rb, dt) - self.centroid_time(ra, dt))
        assert abs(v * 2.0 - 1.0) < 0.01

    def test_pml_reflection_below_1e4(self):
        imap, src, courant = self.coax(1.0, 16.0)
        (rc,), dt = self.record(imap, src, courant,
                                (Probe("c", 5.1, 14.5, "er"),), 55.0)
        t_pass = int((src.t_off + 12.5 + 3.0) / dt)
        incident = np.abs(rc[:t_pass]).max()
        late = np.abs(rc[t_pass:]).max()
        assert late / incident < 1e-4


class TestSymmetries:
    def small_box(self):
        grid = GridSpec(dr=0.02, dz=0.02, r_min=0.6, r_max=1.4, z_min=0.0,
                        z_max=0.5)
        return uniform_index_map(grid, 2.0)

    def run_steps(self, imap, src, m, steps=600):
        cfg = pec_box_config(imap, m=m, source=src, total_steps=steps)
        sim, state = init_simulation(cfg)
        for _ in range(steps):
            sim.step(state)
        return state

    def test_conjugated_source_conjugates_fields(self):
        imap = self.small_box()
        kwargs = dict(r=1.0, z=0.25, component="er", center_thz=400.0,
                      width_thz=60.0, amplitude=1.0 + 0.5j)
        fwd = self.run_steps(imap, SourceSpec(**kwargs), m=7)
        rev = self.run_steps(imap, SourceSpec(conjugate=True, **kwargs), m=7)
        # realness of the update operator up to the azimuthal sign involution
        assert np.array_equal(fwd.er, np.conj(rev.er))
        assert np.array_equal(fwd.ez, np.conj(rev.ez))
        assert np.array_equal(fwd.ephi, -np.conj(rev.ephi))
        assert np.array_equal(fwd.hphi, np.conj(rev.hphi))

    def test_m0_decouples_azimuthal_block(self):
        imap = self.small_box()
        src = SourceSpec(1.0, 0.25, "er", center_thz=400.0, width_thz=60.0)
        state = self.run_steps(imap, src, m=0, steps=400)
        assert np.abs(state.er).max() > 0
        assert np.all(state.ephi == 0)
        assert np.all(state.hr == 0)
        assert np.all(state.hz == 0)

    def test_zero_amplitude_source_keeps_fields_zero(self):
        imap = self.small_box()
        src = SourceSpec(1.0, 0.25, "er", center_thz=400.0, width_thz=60.0,
                         amplitude=0.0)
        cfg = pec_box_config(imap, m=2, source=src,
                             probes=(Probe("p", 1.0, 0.3, "er"),),
                             total_steps=1200)
        series = run_ringdown(cfg)["p"]
        assert len(series.samples) > 0
        assert np.all(series.samples == 0)

    def test_backends_agree(self):
        imap = self.small_box()
        src = SourceSpec(1.0, 0.25, "er", center_thz=400.0, width_thz=60.0)
        cfg = pec_box_config(imap, m=4, source=src, total_steps=200)
        sims = {b: (Simulation(cfg, backend=b), SimState(cfg))
                for b in ("numpy", "numba")}
        for sim, state in sims.values():
            for _ in range(200):
                sim.step(state)
        a, b = sims["numpy"][1], sims["numba"][1]
        for name in ("er", "ephi", "ez", "hr", "hphi", "hz"):
            fa, fb = a.component(name), b.component(name)
            scale = max(np.abs(fa).max(), 1e-300)
            assert np.abs(fa - fb).max() / scale < 1e-12


class TestProfiles:
    def cavity(self):
        return pec_cylinder_config(12, steps=4000)

    def test_accumulated_profile_window_invariance(self):
        cfg = self.cavity()
        nu = dominant_frequency(cfg, (60.0, 180.0))
        prof1 = accumulate_profile(cfg, nu, accumulate_steps=2400)
        prof2 = accumulate_profile(cfg, nu, accumulate_steps=4000)
        # equal up to a global phase within 2% RMS
        num = np.vdot(prof1.ez, prof2.ez)
        phase = num / abs(num)
        diff = prof1.ez - prof2.ez * np.conj(phase)
        rms = np.sqrt(np.mean(np.abs(diff) ** 2) / np.mean(np.abs(prof1.ez) ** 2))
        assert rms < 0.02

    def test_off_resonance_rejection(self):
        cfg = self.cavity()
        nu = dominant_frequency(cfg, (60.0, 180.0))
        on = accumulate_profile(cfg, nu, accumulate_steps=3000)
        off = accumulate_profile(cfg, nu * 1.45, accumulate_steps=3000)
        # profiles are peak-normalized; compare via raw intensity integral
        # of the co-located fields before normalization is not exposed, so
        # re-run the DFT ratio through the probe series instead
        series = run_ringdown(cfg)["p"]
        t = series.times_ps()
        on_amp = np.abs(np.sum(series.samples * np.exp(2j * np.pi * nu * t)))
        off_amp = np.abs(np.sum(series.samples * np.exp(2j * np.pi * nu * 1.45 * t)))
        assert off_amp / on_amp < 0.05
        assert on.intensity().max() == pytest.approx(1.0, abs=1e-9)

    def test_contamination_warning(self):
        cfg = self.cavity()
        with pytest.warns(UserWarning, match="DFT bandwidth"):
            accumulate_profile(cfg, 114.7, accumulate_steps=300,
                               known_resonances_thz=[114.7, 115.0])

    def test_profile_roundtrip_npz(self, tmp_path):
        cfg = self.cavity()
        prof = accumulate_profile(cfg, 114.7, accumulate_steps=600)
        path = tmp_path / "prof.npz"
        prof.save_npz(path)
        back = ModeProfile.load_npz(path)
        assert back.m == prof.m
        assert back.lam_um == pytest.approx(prof.lam_um)
        assert np.array_equal(back.ez, prof.ez)
        prof.save_csv(tmp_path / "prof.csv")
        data = np.loadtxt(tmp_path / "prof.csv", delimiter=",", skiprows=1)
        assert data.shape[1] == 8

    def test_timeseries_csv(self, tmp_path):
        cfg = self.cavity()
        series = run_ringdown(cfg)["p"]
        path = tmp_path / "ts.csv"
        series.to_csv(path)
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        assert data.shape == (len(series.samples), 3)
        assert data[0, 0] == pytest.approx(series.t0_ps)
