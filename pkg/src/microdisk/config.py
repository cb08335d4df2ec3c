"""TOML job configuration: strict parsing into validated Job objects."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .device import DeviceGeometry, MaterialModel, build_geometry, load_dispersion_csv


class ConfigError(ValueError):
    """Malformed or contradictory job configuration."""


JOB_KINDS = ("simulate", "sweep", "fit", "cqed", "report")

_SCHEMA = {
    "job": {"kind", "seed", "workers", "out"},
    "geometry": {"d", "t", "h", "pedestal_undercut", "substrate_extent"},
    "materials": None,  # nested per-material tables, validated separately
    "grid": {"dr", "dz", "r_min", "r_pad", "z_above", "z_below"},
    "simulate": {"m", "polarization", "radial_order", "lam_center_um", "steps",
                 "profile", "standing_wave", "q_i"},
    "sweep": {"polarization", "radial_order", "m_start", "m_stop", "m_step",
              "h_values", "steps", "profile", "q_i", "lam_window"},
    "fit": {"input", "response", "synthetic", "families_from", "window_nm",
            "max_lines"},
    "cqed": {"modes", "lam_um", "q", "v_bar", "eta", "n_max_loc", "n_emit",
             "gamma_total", "gamma_zpl"},
    "report": {"manifest", "q_i"},
}
_MATERIAL_KEYS = {"index", "dispersion_csv", "interpolation"}
_RESPONSE_KEYS = {"fwhm_nm", "pixel_nm", "pixel_count", "lam_start_nm", "uncertainty_nm"}
_SYNTH_KEYS = {"modes", "noise_scale", "seed", "background", "fringes"}


@dataclass
class Job:
    """Validated batch job: everything run_job needs."""

    kind: str
    config_path: str
    raw: dict
    out_dir: Path
    workers: int = 1
    seed: int = 0
    geometry: DeviceGeometry | None = None
    materials: dict = field(default_factory=dict)

    def section(self, name, default=None):
        return self.raw.get(name, default if default is not None else {})


def parse_config(path, out_override=None, workers_override=None,
                 seed_override=None) -> Job:
    """Load and validate a TOML job file into a Job.

    Unknown keys are rejected with the offending name; the worker count can
    be overridden by MICRODISK_WORKERS, then by the explicit argument.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    for section, keys in raw.items():
        if section not in _SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]")
        if section == "materials":
            _check_materials(keys, path)
            continue
        if not isinstance(keys, dict):
            raise ConfigError(f"{path}: [{section}] must be a table")
        allowed = _SCHEMA[section]
        for key in keys:
            if key == "response" and section == "fit":
                _check_keys(keys[key], _RESPONSE_KEYS, f"{path}: [fit.response]")
                continue
            if key == "synthetic" and section == "fit":
                _check_keys(keys[key], _SYNTH_KEYS, f"{path}: [fit.synthetic]")
                continue
            if key not in allowed:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")

    job_tbl = raw.get("job", {})
    kind = job_tbl.get("kind")
    if kind not in JOB_KINDS:
        raise ConfigError(f"{path}: job.kind must be one of {JOB_KINDS}, got {kind!r}")
    if kind in ("simulate", "sweep") and kind not in raw:
        raise ConfigError(f"{path}: job.kind = {kind!r} needs a [{kind}] section")

    workers = int(job_tbl.get("workers", 1))
    env = os.environ.get("MICRODISK_WORKERS")
    if env:
        workers = int(env)
    if workers_override:
        workers = int(workers_override)
    if workers < 1:
        raise ConfigError("worker count must be >= 1")

    seed = int(job_tbl.get("seed", 0))
    if seed_override is not None:
        seed = int(seed_override)

    out_dir = Path(out_override or job_tbl.get("out", "out"))

    geometry = None
    if "geometry" in raw:
        geometry = build_geometry(raw["geometry"])
    materials = _build_materials(raw.get("materials", {}), path.parent)

    if kind in ("simulate", "sweep") and geometry is None:
        raise ConfigError(f"{path}: [{kind}] jobs need a [geometry] section")

    return Job(kind=kind, config_path=str(path), raw=raw, out_dir=out_dir,
               workers=workers, seed=seed, geometry=geometry, materials=materials)


def _check_keys(table, allowed, where):
    if not isinstance(table, dict):
        raise ConfigError(f"{where} must be a table")
    for key in table:
        if key not in allowed:
            raise ConfigError(f"{where}: unknown key {key!r}")


def _check_materials(table, path):
    if not isinstance(table, dict):
        raise ConfigError(f"{path}: [materials] must hold per-material tables")
    for name, sub in table.items():
        if name not in ("guiding-layer", "diamond", "vacuum"):
            raise ConfigError(f"{path}: unknown material {name!r}")
        _check_keys(sub, _MATERIAL_KEYS, f"{path}: [materials.{name}]")


def _build_materials(table, base_dir) -> dict:
    """MaterialModels with defaults: guiding layer 3.25, diamond 2.42."""
    out = {
        "guiding-layer": MaterialModel("guiding-layer", 3.25),
        "diamond": MaterialModel("diamond", 2.42),
    }
    for name, sub in table.items():
        if name == "vacuum":
            continue
        index = float(sub.get("index", out[name].reference_index))
        dispersion = None
        if "dispersion_csv" in sub:
            csv_path = Path(sub["dispersion_csv"])
            if not csv_path.is_absolute():
                csv_path = base_dir / csv_path
            dispersion = load_dispersion_csv(csv_path)
        out[name] = MaterialModel(name, index, dispersion_table=dispersion,
                                  interpolation_rule=sub.get("interpolation", "pchip"))
    return out
