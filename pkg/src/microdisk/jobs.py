"""Batch orchestration: simulate/sweep/fit/cqed/report job runners.

Each job writes its artifacts plus a deterministic manifest.json listing
every artifact with a content hash and every task with its status; failed
tasks are recorded without aborting their siblings, and re-running a job
with the same config and seed reproduces byte-identical payloads.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import cqed as cqed_mod
from . import fdtd, slab, spectra
from .config import ConfigError, Job
from .device import (DIAMOND, GUIDING, DeviceGeometry, GridSpec, MaterialModel,
                     build_geometry, rasterize, refractive_index)
from .modes import (ResonantMode, classify_mode, fsr_dispersion, fsr_table_to_csv,
                    harmonic_inversion, mode_volume_and_eta, modes_to_csv,
                    modes_to_jsonl, q_budget)

C_UM_THZ = 299.792458


def domain_grid(geometry: DeviceGeometry, dr: float, dz: float,
                r_min: float | None = None, r_pad: float = 0.85,
                z_above: float = 1.0, z_below: float = 1.05,
                pml_cells: int = 12) -> GridSpec:
    """Computational annulus around the disk with PML clearance."""
    if r_min is None:
        r_min = 0.25 * geometry.disk_diameter
    r_max = geometry.radius + r_pad + pml_cells * dr
    z_min = -geometry.diamond_etch_depth - z_below - pml_cells * dz
    z_max = geometry.guiding_layer_thickness + z_above + pml_cells * dz
    return GridSpec(dr=dr, dz=dz, r_min=_snap(r_min, dr), r_max=_snap(r_max, dr),
                    z_min=_snap(z_min, dz), z_max=_snap(z_max, dz))


def _snap(x, step):
    return round(x / step) * step


def estimate_mode_wavelength(geometry: DeviceGeometry, materials: dict, m: int,
                             polarization: str, radial_order: int = 0,
                             window=(0.5, 0.9)) -> float:
    """Curvature-corrected oracle seed for the resonance of azimuthal number m."""
    n_dia = materials["diamond"].reference_index
    gap = materials["guiding-layer"]

    def n_eff(lam):
        stack = slab.device_rim_stack(
            geometry.guiding_layer_thickness, geometry.diamond_etch_depth,
            n_guiding=refractive_index(gap, lam) if gap.dispersion_table is not None
            else gap.reference_index,
            n_diamond=n_dia, polarization=polarization,
            etched=geometry.diamond_etch_depth > 0)
        guided = slab.slab_neff(stack, lam, with_group_index=False)
        if not guided:
            raise slab.NoRootError(f"no guided slab mode at {lam} um")
        return guided[0].n_eff

    res = slab.wgm_resonances_corrected(geometry.radius, n_eff, [m],
                                        radial_order=radial_order,
                                        polarization=polarization, window=window)
    return res[0][1]


def simulate_mode(geometry: DeviceGeometry, materials: dict, m: int,
                  polarization: str, radial_order: int = 0,
                  lam_est_um: float | None = None, dr: float = 0.01,
                  dz: float = 0.01, steps: int = 16000,
                  source_width_thz: float = 9.0, profile: bool = False,
                  standing_wave: bool = False, q_i: float | None = None,
                  grid: GridSpec | None = None) -> dict:
    """Full single-mode pipeline: ringdown, inversion, optional profile pass.

    Returns a plain-dict record (picklable across worker processes) with the
    resonance wavelength, radiation Q, and, when profile is set, the
    measured polarization/radial order, normalized mode volume and diamond
    overlap.
    """
    if lam_est_um is None:
        lam_est_um = estimate_mode_wavelength(geometry, materials, m,
                                              polarization, radial_order)
    mats = {GUIDING: materials["guiding-layer"], DIAMOND: materials["diamond"]}
    if grid is None:
        grid = domain_grid(geometry, dr, dz)
    index_map = rasterize(geometry, mats, grid, lam_est_um)

    nu_est = C_UM_THZ / lam_est_um
    src_component = "er" if polarization == "TE" else "ez"
    z_mid = 0.5 * geometry.guiding_layer_thickness
    src = fdtd.SourceSpec(r=geometry.radius - 0.08, z=z_mid,
                          component=src_component, center_thz=nu_est,
                          width_thz=source_width_thz)
    probes = (fdtd.Probe("rim", geometry.radius - 0.11, z_mid, src_component),
              fdtd.Probe("inner", geometry.radius - 0.27, z_mid, src_component))
    cfg = fdtd.SimConfig(m=m, index_map=index_map, source=src, probes=probes,
                         total_steps=steps)
    series = fdtd.run_ringdown(cfg)
    band = (nu_est - 1.6 * source_width_thz, nu_est + 1.6 * source_width_thz)
    comps = harmonic_inversion(series["rim"], band)
    if not comps:
        comps = harmonic_inversion(series["inner"], band)
    if not comps:
        raise RuntimeError(f"no resonance found for m={m} near {lam_est_um:.4f} um")
    peak = comps[0]

    record = {"m": m, "polarization": polarization, "radial_order": radial_order,
              "lam_um": peak.lam_um, "q_rad": peak.q, "q_i": q_i,
              "v_bar": None, "eta": None, "r_o": None,
              "standing_wave": standing_wave,
              "lam_est_um": lam_est_um, "residual": peak.residual}

    if profile:
        cfg2 = fdtd.SimConfig(
            m=m, index_map=index_map,
            source=fdtd.SourceSpec(r=src.r, z=src.z, component=src_component,
                                   center_thz=peak.nu_thz,
                                   width_thz=source_width_thz),
            total_steps=steps)
        prof = fdtd.accumulate_profile(
            cfg2, peak.nu_thz, accumulate_steps=steps,
            known_resonances_thz=[c.nu_thz for c in comps[1:]])
        pol, order = classify_mode(prof, index_map)
        vol = mode_volume_and_eta(prof, index_map)
        record.update(polarization=pol, radial_order=order, v_bar=vol.v_bar,
                      eta=vol.eta, r_o=vol.r_o)
    return record


def record_to_mode(record: dict) -> ResonantMode:
    fields = {k: record[k] for k in ("m", "polarization", "radial_order",
                                     "lam_um", "q_rad", "q_i", "v_bar", "eta",
                                     "r_o", "standing_wave")}
    if record["q_rad"] == math.inf:
        fields["q_rad"] = 1e12  # non-decaying within the run; floor for records
    return ResonantMode(**fields)


# -- job running ----------------------------------------------------------

def run_job(job: Job) -> tuple[dict, int]:
    """Execute a job; returns (manifest, number of failed tasks)."""
    job.out_dir.mkdir(parents=True, exist_ok=True)
    runner = {"simulate": _run_simulate, "sweep": _run_sweep, "fit": _run_fit,
              "cqed": _run_cqed, "report": _run_report}[job.kind]
    tasks, artifacts = runner(job)
    manifest = {
        "job_kind": job.kind,
        "config_hash": _hash_config(job.raw),
        "seed": job.seed,
        "tasks": sorted(tasks, key=lambda t: t["key"]),
        "artifacts": sorted(artifacts, key=lambda a: a["name"]),
    }
    manifest_path = job.out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    failed = sum(1 for t in manifest["tasks"] if t["status"] == "failed")
    return manifest, failed


def _hash_config(raw) -> str:
    return hashlib.sha256(json.dumps(raw, sort_keys=True, default=str).encode()).hexdigest()


def _artifact(out_dir: Path, name: str) -> dict:
    path = out_dir / name
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    return {"name": name, "path": str(path), "sha256": digest}


def _simulate_task(args):
    key, kwargs = args
    try:
        record = simulate_mode(**kwargs)
        return {"key": key, "status": "ok", "record": record}
    except Exception as exc:  # isolate per-task failures
        return {"key": key, "status": "failed", "error": f"{type(exc).__name__}: {exc}"}


def _run_tasks(task_args, workers):
    if workers <= 1 or len(task_args) <= 1:
        return [_simulate_task(a) for a in task_args]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_simulate_task, task_args))


def _sim_kwargs(job: Job, table: dict) -> dict:
    grid_tbl = job.section("grid")
    return dict(
        geometry=job.geometry, materials=job.materials,
        m=int(table["m"]), polarization=table.get("polarization", "TE"),
        radial_order=int(table.get("radial_order", 0)),
        lam_est_um=table.get("lam_center_um"),
        dr=float(grid_tbl.get("dr", 0.01)), dz=float(grid_tbl.get("dz", 0.01)),
        steps=int(table.get("steps", 16000)),
        profile=bool(table.get("profile", False)),
        standing_wave=bool(table.get("standing_wave", False)),
        q_i=table.get("q_i"))


def _run_simulate(job: Job):
    table = job.section("simulate")
    results = _run_tasks([(f"m{table['m']}", _sim_kwargs(job, table))], 1)
    tasks, records = _collect(results)
    artifacts = _write_mode_artifacts(job.out_dir, records, fsr=False)
    return tasks, artifacts


def _run_sweep(job: Job):
    table = job.section("sweep")
    m_values = range(int(table["m_start"]), int(table["m_stop"]) + 1,
                     int(table.get("m_step", 1)))
    h_values = table.get("h_values", [job.geometry.diamond_etch_depth])
    task_args = []
    for h in h_values:
        geom = build_geometry({"d": job.geometry.disk_diameter,
                               "t": job.geometry.guiding_layer_thickness,
                               "h": float(h),
                               "pedestal_undercut": job.geometry.pedestal_undercut,
                               "substrate_extent": job.geometry.substrate_extent})
        for m in m_values:
            kwargs = _sim_kwargs(job, {**table, "m": m})
            kwargs["geometry"] = geom
            key = f"h{float(h):.3f}_m{m:04d}"
            task_args.append((key, kwargs))
    results = _run_tasks(task_args, job.workers)
    tasks, records = _collect(results)
    artifacts = _write_mode_artifacts(job.out_dir, records, fsr=True)
    return tasks, artifacts


def _collect(results):
    tasks, records = [], []
    for res in results:
        task = {"key": res["key"], "status": res["status"]}
        if res["status"] == "ok":
            records.append((res["key"], res["record"]))
        else:
            task["error"] = res["error"]
        tasks.append(task)
    records.sort(key=lambda kr: kr[0])
    return tasks, records


def _write_mode_artifacts(out_dir: Path, keyed_records, fsr: bool):
    artifacts = []
    records = [dict(r, key=k) for k, r in keyed_records]
    (out_dir / "records.jsonl").write_text(
        "".join(json.dumps(r, sort_keys=True) + "\n" for r in records))
    artifacts.append(_artifact(out_dir, "records.jsonl"))
    modes = [record_to_mode(r) for r in records]
    modes_to_csv(modes, out_dir / "modes.csv")
    artifacts.append(_artifact(out_dir, "modes.csv"))
    modes_to_jsonl(modes, out_dir / "modes.jsonl")
    artifacts.append(_artifact(out_dir, "modes.jsonl"))
    if fsr:
        by_key_prefix = {}
        for rec in records:
            prefix = rec["key"].split("_")[0] if rec["key"].startswith("h") else ""
            by_key_prefix.setdefault(prefix, []).append(record_to_mode(rec))
        rows = []
        for prefix in sorted(by_key_prefix):
            group = by_key_prefix[prefix]
            try:
                rows += [(lam, f, f"{prefix}:{fam}" if prefix else fam)
                         for lam, f, fam in fsr_dispersion(group)]
            except ValueError:
                continue  # families with gaps or singletons carry no FSR rows
        fsr_table_to_csv(rows, out_dir / "fsr.csv")
        artifacts.append(_artifact(out_dir, "fsr.csv"))
    return artifacts


def _run_fit(job: Job):
    table = job.section("fit")
    resp = spectra.InstrumentResponse(**table.get("response", {}))
    tasks, artifacts = [], []
    if "input" in table:
        src = Path(table["input"])
        if not src.is_absolute():
            src = Path(job.config_path).parent / src
        spectrum = spectra.Spectrum.from_csv(src)
    elif "synthetic" in table:
        synth = table["synthetic"]
        lines = [tuple(map(float, row)) for row in synth.get("modes", [])]
        background = spectra.BackgroundSpec() if synth.get("background", True) else None
        fringes = spectra.FringeSpec() if synth.get("fringes", True) else None
        spectrum = spectra.synthesize_spectrum(
            lines, resp, background=background, fringes=fringes,
            noise_scale=float(synth.get("noise_scale", 0.0)),
            seed=int(synth.get("seed", job.seed)))
        spectrum.to_csv(job.out_dir / "spectrum.csv")
        artifacts.append(_artifact(job.out_dir, "spectrum.csv"))
    else:
        raise ConfigError("[fit] needs either input or a synthetic recipe")

    peaks = spectra.detect_peaks(spectrum, max_width_nm=0.5)
    labels = {}
    if "families_from" in table:
        fam_path = Path(table["families_from"])
        if not fam_path.is_absolute():
            fam_path = Path(job.config_path).parent / fam_path
        tables = _family_tables_from_modes(fam_path)
        labels = {id(p): lab for p, lab in spectra.assign_families(peaks, tables)}

    window = float(table.get("window_nm", 0.8))
    fits = []
    for k, peak in enumerate(peaks[: int(table.get("max_lines", 64))]):
        key = f"line{k:03d}_{peak.lam_nm:.3f}"
        try:
            fit = spectra.fit_resonance(
                spectrum, (peak.lam_nm - window, peak.lam_nm + window), resp)
            entry = fit.to_json_dict()
            entry["family"] = labels.get(id(peak), "unknown")
            fits.append(entry)
            tasks.append({"key": key, "status": "ok"})
        except (spectra.FitError, ValueError) as exc:
            tasks.append({"key": key, "status": "failed",
                          "error": f"{type(exc).__name__}: {exc}"})
    (job.out_dir / "linefits.jsonl").write_text(
        "".join(json.dumps(f, sort_keys=True) + "\n" for f in fits))
    artifacts.append(_artifact(job.out_dir, "linefits.jsonl"))
    return tasks, artifacts


def _family_tables_from_modes(path) -> dict:
    tables = {}
    for line in Path(path).read_text().splitlines():
        mode = ResonantMode.from_json(line)
        tables.setdefault(mode.family, []).append(mode.lam_um * 1e3)
    return {k: sorted(v) for k, v in tables.items() if len(v) >= 2}


def _run_cqed(job: Job):
    table = job.section("cqed")
    emitter = cqed_mod.EmitterModel(
        gamma_total=float(table.get("gamma_total", 0.013)),
        gamma_zpl=float(table.get("gamma_zpl", 0.0004)),
        lambda_zpl=float(table.get("lam_um", 0.637)))
    entries, tasks = [], []
    if "modes" in table:
        path = Path(table["modes"])
        if not path.is_absolute():
            path = Path(job.config_path).parent / path
        modes = [ResonantMode.from_json(line)
                 for line in path.read_text().splitlines()]
    else:
        modes = [ResonantMode(m=0, polarization="TE", radial_order=0,
                              lam_um=float(table["lam_um"]),
                              q_rad=float(table["q"]),
                              v_bar=float(table["v_bar"]),
                              eta=float(table["eta"]))]
    for k, mode in enumerate(modes):
        key = f"mode{k:03d}_m{mode.m}"
        if mode.v_bar is None or mode.eta is None:
            tasks.append({"key": key, "status": "failed",
                          "error": "ValueError: mode lacks v_bar/eta"})
            continue
        # the enhancement formula is written in the traveling-wave volume
        params = cqed_mod.mode_cqed_params(
            mode.lam_um, mode.q_total, mode.v_bar, mode.eta, emitter=emitter,
            n_max_loc=float(table.get("n_max_loc", 3.25)),
            n_emit=float(table.get("n_emit", 2.42)))
        entry = asdict(params)
        entry.update(m=mode.m, family=mode.family, lam_um=mode.lam_um,
                     q_total=mode.q_total)
        entries.append(entry)
        tasks.append({"key": key, "status": "ok"})
    (job.out_dir / "cqed.jsonl").write_text(
        "".join(json.dumps(e, sort_keys=True) + "\n" for e in entries))
    return tasks, [_artifact(job.out_dir, "cqed.jsonl")]


def _run_report(job: Job):
    table = job.section("report")
    manifest_path = Path(table.get("manifest", job.out_dir / "manifest.json"))
    if not manifest_path.exists():
        raise ConfigError(f"report: manifest {manifest_path} does not exist")
    manifest = json.loads(manifest_path.read_text())
    by_name = {a["name"]: Path(a["path"]) for a in manifest.get("artifacts", [])}
    if "records.jsonl" not in by_name:
        raise ConfigError("report: manifest has no mode records to report on")
    records = [json.loads(line)
               for line in by_name["records.jsonl"].read_text().splitlines()]
    if not records:
        raise ConfigError("report: mode record list is empty")
    q_i = float(table.get("q_i", 9000.0))

    groups = {}
    for rec in records:
        prefix = rec["key"].split("_")[0] if rec["key"].startswith("h") else ""
        family = f"{rec['polarization']}{rec['radial_order']}"
        groups.setdefault((prefix, family), []).append(rec)

    artifacts = []
    fsr_rows = []
    q_rows = []
    for (prefix, family), group in sorted(groups.items()):
        group.sort(key=lambda r: r["m"])
        label = f"{prefix}:{family}" if prefix else family
        for rec in group:
            q_rad = min(rec["q_rad"], 1e12)
            q_rows.append((rec["lam_um"], q_rad, q_budget(q_rad, q_i), label))
        for lo, hi in zip(group[:-1], group[1:]):
            if hi["m"] == lo["m"] + 1:
                fsr_rows.append((0.5 * (lo["lam_um"] + hi["lam_um"]),
                                 (lo["lam_um"] - hi["lam_um"]) * 1e3, label))

    with open(job.out_dir / "q_vs_lambda.csv", "w") as fh:
        fh.write("lam_um,q_rad,q_total,series\n")
        for lam, q_rad, q_total, label in sorted(q_rows):
            fh.write(f"{lam:.8g},{q_rad:.6g},{q_total:.6g},{label}\n")
    artifacts.append(_artifact(job.out_dir, "q_vs_lambda.csv"))

    fsr_table_to_csv(sorted(fsr_rows), job.out_dir / "fsr_vs_lambda.csv")
    artifacts.append(_artifact(job.out_dir, "fsr_vs_lambda.csv"))

    modes = [record_to_mode(r) for r in records]
    modes_to_csv(modes, job.out_dir / "mode_table.csv")
    artifacts.append(_artifact(job.out_dir, "mode_table.csv"))

    cqed_rows = []
    for rec in records:
        if rec.get("v_bar") is None or rec.get("eta") is None:
            continue
        mode = record_to_mode(rec)
        params = cqed_mod.mode_cqed_params(mode.lam_um, q_budget(mode.q_rad, q_i),
                                           mode.v_bar, mode.eta)
        cqed_rows.append((rec["key"], mode.family, mode.lam_um, params.kappa,
                          params.f_zpl, params.g_zpl, params.beta))
    with open(job.out_dir / "cqed_summary.csv", "w") as fh:
        fh.write("key,family,lam_um,kappa_ghz,f_zpl,g_zpl_ghz,beta\n")
        for row in sorted(cqed_rows):
            fh.write(",".join(str(x) for x in row) + "\n")
    artifacts.append(_artifact(job.out_dir, "cqed_summary.csv"))

    tasks = [{"key": "report", "status": "ok"}]
    return tasks, artifacts
