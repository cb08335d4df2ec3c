"""Parametric device geometry, material models and permittivity rasterization.

The device is an axisymmetric stack: a high-index guiding-layer disk
(diameter d, thickness t) sitting on a diamond pedestal of depth h that
merges into a semi-infinite diamond substrate, with vacuum everywhere else.
All lengths are in micrometers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator, interp1d

VACUUM = 0
DIAMOND = 1
GUIDING = 2

_MATERIAL_NAMES = {"vacuum": VACUUM, "diamond": DIAMOND, "guiding-layer": GUIDING}


class ValidationError(ValueError):
    """A geometry/material parameter violates its contract."""


@dataclass(frozen=True)
class MaterialModel:
    """Optical material: constant index or a tabulated dispersion curve.

    dispersion_table, when present, is an (N, 2) array of (lambda_um, n)
    samples with strictly increasing wavelength.  interpolation_rule is
    "linear" or "pchip" (monotone cubic).
    """

    name: str
    reference_index: float
    dispersion_table: np.ndarray | None = None
    interpolation_rule: str = "pchip"

    def __post_init__(self):
        if self.name not in _MATERIAL_NAMES:
            raise ValidationError(f"unknown material name {self.name!r}")
        if self.reference_index < 1.0:
            raise ValidationError(
                f"{self.name}: reference_index must be >= 1, got {self.reference_index}")
        if self.interpolation_rule not in ("linear", "pchip"):
            raise ValidationError(
                f"{self.name}: unknown interpolation_rule {self.interpolation_rule!r}")
        if self.dispersion_table is not None:
            tab = np.asarray(self.dispersion_table, dtype=float)
            if tab.ndim != 2 or tab.shape[1] != 2 or tab.shape[0] < 2:
                raise ValidationError(f"{self.name}: dispersion_table must be (N>=2, 2)")
            if np.any(np.diff(tab[:, 0]) <= 0):
                raise ValidationError(
                    f"{self.name}: dispersion_table wavelengths must be strictly increasing")
            if np.any(tab[:, 1] < 1.0):
                raise ValidationError(f"{self.name}: tabulated n must be >= 1")
            object.__setattr__(self, "dispersion_table", tab)

    def _interpolant(self):
        tab = self.dispersion_table
        if self.interpolation_rule == "pchip":
            return PchipInterpolator(tab[:, 0], tab[:, 1], extrapolate=False)
        return interp1d(tab[:, 0], tab[:, 1], kind="linear", bounds_error=True)


def load_dispersion_csv(path) -> np.ndarray:
    """Read a two-column (lambda_um, n) CSV; '#' lines are comments."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].lstrip().startswith("#"):
                continue
            rows.append((float(rec[0]), float(rec[1])))
    if len(rows) < 2:
        raise ValidationError(f"{path}: dispersion table needs at least 2 rows")
    return np.asarray(rows, dtype=float)


def default_gap_material() -> MaterialModel:
    """Guiding-layer material with the bundled dispersion table."""
    table = load_dispersion_csv(Path(__file__).parent / "data" / "gap_index.csv")
    return MaterialModel("guiding-layer", 3.25, dispersion_table=table)


def refractive_index(material: MaterialModel, lam: float) -> float:
    """n(lambda); constant reference_index when no table is attached."""
    if material.dispersion_table is None:
        return material.reference_index
    tab = material.dispersion_table
    if lam < tab[0, 0] or lam > tab[-1, 0]:
        raise ValidationError(
            f"{material.name}: wavelength {lam} um outside dispersion table "
            f"domain [{tab[0, 0]}, {tab[-1, 0]}]")
    return float(material._interpolant()(lam))


def group_index(material: MaterialModel, lam: float, step: float = 1e-4) -> float:
    """Group index n_g = n - lambda * dn/dlambda.

    The derivative is a centered finite difference of the interpolant with
    half-width `step` (um).  For a constant-index material this returns the
    index exactly.
    """
    if material.dispersion_table is None:
        return material.reference_index
    tab = material.dispersion_table
    if lam - step < tab[0, 0] or lam + step > tab[-1, 0]:
        raise ValidationError(
            f"{material.name}: wavelength {lam} um too close to the table edge "
            f"for the centered difference (half-width {step} um)")
    f = material._interpolant()
    dndl = (float(f(lam + step)) - float(f(lam - step))) / (2.0 * step)
    return float(f(lam)) - lam * dndl


@dataclass(frozen=True)
class DeviceGeometry:
    """Axisymmetric disk-on-pedestal geometry (lengths in um).

    z = 0 is the guiding-layer/diamond interface; the guiding layer spans
    0 < z < t, the pedestal -h < z < 0 under the disk footprint, and the
    substrate fills z < -h.
    """

    disk_diameter: float
    guiding_layer_thickness: float
    diamond_etch_depth: float
    pedestal_undercut: float = 0.0
    substrate_extent: float = 1.5

    @property
    def radius(self) -> float:
        return 0.5 * self.disk_diameter

    def material_at(self, r: float, z: float) -> int:
        """Material label at a point of the (r, z) half-plane."""
        t = self.guiding_layer_thickness
        h = self.diamond_etch_depth
        if 0.0 <= z < t and r <= self.radius:
            return GUIDING
        if z < -h:
            return DIAMOND
        if z < 0.0 and r <= self.radius - self.pedestal_undercut:
            return DIAMOND
        return VACUUM


_GEOMETRY_KEYS = {
    "d": "disk_diameter",
    "t": "guiding_layer_thickness",
    "h": "diamond_etch_depth",
    "pedestal_undercut": "pedestal_undercut",
    "substrate_extent": "substrate_extent",
}


def build_geometry(raw: dict) -> DeviceGeometry:
    """Validate a raw parameter set into a DeviceGeometry.

    Accepts the short keys d/t/h or the full field names.  Raises
    ValidationError naming the offending field.
    """
    params = {}
    for key, value in raw.items():
        name = _GEOMETRY_KEYS.get(key, key)
        if name not in _GEOMETRY_KEYS.values():
            raise ValidationError(f"unknown geometry parameter {key!r}")
        params[name] = float(value)
    for required in ("disk_diameter", "guiding_layer_thickness", "diamond_etch_depth"):
        if required not in params:
            raise ValidationError(f"missing geometry parameter {required!r}")

    if params["disk_diameter"] <= 0:
        raise ValidationError("d must be positive")
    if params["guiding_layer_thickness"] <= 0:
        raise ValidationError("t must be positive")
    if params["diamond_etch_depth"] < 0:
        raise ValidationError("h must be non-negative")
    if params.get("pedestal_undercut", 0.0) < 0:
        raise ValidationError("pedestal_undercut must be non-negative")
    if params.get("pedestal_undercut", 0.0) >= 0.5 * params["disk_diameter"]:
        raise ValidationError("pedestal_undercut must be smaller than the disk radius")
    if params.get("substrate_extent", 1.5) <= 0:
        raise ValidationError("substrate_extent must be positive")
    return DeviceGeometry(**params)


@dataclass(frozen=True)
class GridSpec:
    """Uniform (r, z) grid over an annular computational domain."""

    dr: float
    dz: float
    r_min: float
    r_max: float
    z_min: float
    z_max: float

    def __post_init__(self):
        if self.dr <= 0 or self.dz <= 0:
            raise ValidationError("grid spacings must be positive")
        if self.r_min < 0 or self.r_max <= self.r_min:
            raise ValidationError("need 0 <= r_min < r_max")
        if self.z_max <= self.z_min:
            raise ValidationError("need z_min < z_max")

    @property
    def nr(self) -> int:
        """Number of radial cells (nodes are nr + 1)."""
        return int(round((self.r_max - self.r_min) / self.dr))

    @property
    def nz(self) -> int:
        return int(round((self.z_max - self.z_min) / self.dz))

    def r_nodes(self) -> np.ndarray:
        return self.r_min + self.dr * np.arange(self.nr + 1)

    def z_nodes(self) -> np.ndarray:
        return self.z_min + self.dz * np.arange(self.nz + 1)


@dataclass(frozen=True)
class IndexMap:
    """Squared refractive index n^2 sampled on the grid nodes.

    eps_sq has shape (nr + 1, nz + 1); material carries the label of the
    node center (vacuum/diamond/guiding) from the exact geometry, which is
    what mode overlap analysis uses to identify diamond cells.
    """

    dr: float
    dz: float
    r0: float
    z0: float
    eps: np.ndarray
    material: np.ndarray
    r_min: float = field(default=0.0)

    def __post_init__(self):
        if np.any(self.eps < 1.0):
            raise ValidationError("IndexMap: all n^2 values must be >= 1")
        if self.eps.shape != self.material.shape:
            raise ValidationError("IndexMap: eps and material shapes differ")

    @property
    def shape(self):
        return self.eps.shape

    def r_nodes(self) -> np.ndarray:
        return self.r0 + self.dr * np.arange(self.eps.shape[0])

    def z_nodes(self) -> np.ndarray:
        return self.z0 + self.dz * np.arange(self.eps.shape[1])


def rasterize(geometry: DeviceGeometry, materials: dict, grid: GridSpec,
              lam_ref: float, subpixel: bool = True,
              supersample: int = 4) -> IndexMap:
    """Sample n^2(r, z) of the device on the grid nodes.

    materials maps label -> MaterialModel for VACUUM, DIAMOND and GUIDING
    (vacuum may be omitted).  Indices are evaluated at lam_ref.  With
    subpixel enabled, each node value is the arithmetic mean of n^2 over
    the surrounding dr x dz cell (supersample^2 point average), which
    softens staircasing at material boundaries.
    """
    n_by_label = {VACUUM: 1.0}
    for label, mat in materials.items():
        n_by_label[label] = refractive_index(mat, lam_ref)
    n_max = max(n_by_label.values())
    limit = lam_ref / (15.0 * n_max)
    if max(grid.dr, grid.dz) > limit * (1 + 1e-9):
        raise ValidationError(
            f"grid too coarse: spacing {max(grid.dr, grid.dz):.4g} um exceeds "
            f"lambda/(15 n_max) = {limit:.4g} um")
    if grid.r_min >= geometry.radius:
        raise ValidationError("r_min must be smaller than the disk radius")

    r = grid.r_nodes()
    z = grid.z_nodes()
    label_grid = _labels_on(geometry, r, z)

    lut = np.ones(3)
    for label, n in n_by_label.items():
        lut[label] = n * n

    if not subpixel:
        eps = lut[label_grid]
    else:
        eps = np.zeros((r.size, z.size))
        offs = (np.arange(supersample) + 0.5) / supersample - 0.5
        for ur in offs:
            for uz in offs:
                sub = _labels_on(geometry, r + ur * grid.dr, z + uz * grid.dz)
                eps += lut[sub]
        eps /= supersample ** 2

    return IndexMap(dr=grid.dr, dz=grid.dz, r0=grid.r_min, z0=grid.z_min,
                    eps=eps, material=label_grid, r_min=grid.r_min)


def _labels_on(geometry: DeviceGeometry, r: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Vectorized material_at over the outer product of r and z samples."""
    rr = r[:, None]
    zz = z[None, :]
    t = geometry.guiding_layer_thickness
    h = geometry.diamond_etch_depth
    ped_r = geometry.radius - geometry.pedestal_undercut
    labels = np.full((r.size, z.size), VACUUM, dtype=np.int8)
    diamond = (zz < -h) | ((zz < 0.0) & (rr <= ped_r))
    labels[np.broadcast_to(diamond, labels.shape)] = DIAMOND
    guiding = (zz >= 0.0) & (zz < t) & (rr <= geometry.radius)
    labels[np.broadcast_to(guiding, labels.shape)] = GUIDING
    return labels


def uniform_index_map(grid: GridSpec, n: float) -> IndexMap:
    """Homogeneous map (test mode): constant n everywhere."""
    shape = (grid.nr + 1, grid.nz + 1)
    return IndexMap(dr=grid.dr, dz=grid.dz, r0=grid.r_min, z0=grid.z_min,
                    eps=np.full(shape, n * n), material=np.full(shape, VACUUM, np.int8),
                    r_min=grid.r_min)
