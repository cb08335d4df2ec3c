import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from microdisk import device
from microdisk.device import (DIAMOND, GUIDING, VACUUM, GridSpec, MaterialModel,
                              ValidationError, build_geometry, group_index,
                              rasterize, refractive_index, uniform_index_map)


def materials():
    return {DIAMOND: MaterialModel("diamond", 2.42),
            GUIDING: MaterialModel("guiding-layer", 3.25)}


class TestBuildGeometry:
    def test_paper_devices_valid(self):
        g = build_geometry({"d": 4.5, "t": 0.13, "h": 0.6})
        assert g.radius == pytest.approx(2.25)
        g2 = build_geometry({"d": 6.5, "t": 0.25, "h": 0.6})
        assert g2.guiding_layer_thickness == 0.25

    def test_negative_diameter_rejected(self):
        with pytest.raises(ValidationError, match="d must be positive"):
            build_geometry({"d": -1, "t": 0.13, "h": 0})

    def test_unknown_key_rejected(self):
        with pytest.raises(ValidationError, match="wat"):
            build_geometry({"d": 1, "t": 0.1, "h": 0, "wat": 2})

    def test_undercut_bounded_by_radius(self):
        with pytest.raises(ValidationError, match="pedestal_undercut"):
            build_geometry({"d": 4.0, "t": 0.1, "h": 0.5, "pedestal_undercut": 2.0})

    @given(d=st.floats(0.5, 20), t=st.floats(0.01, 1), h=st.floats(0, 2))
    def test_idempotent(self, d, t, h):
        g = build_geometry({"d": d, "t": t, "h": h})
        again = build_geometry({"d": g.disk_diameter,
                                "t": g.guiding_layer_thickness,
                                "h": g.diamond_etch_depth})
        assert again == g


class TestRefractiveIndex:
    def test_constant_materials(self):
        assert refractive_index(MaterialModel("diamond", 2.42), 0.637) == 2.42
        assert refractive_index(MaterialModel("guiding-layer", 3.25), 0.8) == 3.25

    def test_table_interpolates_and_bounds(self):
        tab = np.array([[0.5, 3.4], [0.6, 3.3], [0.7, 3.2]])
        mat = MaterialModel("guiding-layer", 3.25, dispersion_table=tab,
                            interpolation_rule="linear")
        assert refractive_index(mat, 0.55) == pytest.approx(3.35)
        with pytest.raises(ValidationError, match="outside"):
            refractive_index(mat, 0.45)

    def test_table_must_increase(self):
        with pytest.raises(ValidationError, match="increasing"):
            MaterialModel("diamond", 2.42,
                          dispersion_table=np.array([[0.6, 2.4], [0.5, 2.4]]))

    def test_monotone_continuous_on_domain(self):
        mat = device.default_gap_material()
        lams = np.linspace(0.55, 0.79, 200)
        n = np.array([refractive_index(mat, x) for x in lams])
        assert np.all(np.diff(n) < 0)  # normal dispersion
        assert np.abs(np.diff(n)).max() < 0.01  # no jumps


class TestGroupIndex:
    @given(lam=st.floats(0.4, 1.5))
    def test_constant_index_gives_index(self, lam):
        assert group_index(MaterialModel("diamond", 2.42), lam) == 2.42

    def test_linear_table_analytic(self):
        # n(lam) = 3.5 - 0.4 (lam - 0.55) -> n_g = n + 0.4 lam
        lams = np.linspace(0.45, 0.75, 31)
        tab = np.column_stack([lams, 3.5 - 0.4 * (lams - 0.55)])
        mat = MaterialModel("guiding-layer", 3.25, dispersion_table=tab,
                            interpolation_rule="linear")
        for lam in (0.55, 0.6, 0.65):
            expected = (3.5 - 0.4 * (lam - 0.55)) + 0.4 * lam
            assert group_index(mat, lam) == pytest.approx(expected, rel=1e-9)

    def test_against_symbolic_derivative_of_fit(self):
        # Oracle: the bundled table is a single-oscillator fit with a known
        # closed-form derivative; the centered difference on the interpolant
        # must agree with differentiating the fit symbolically.
        s_osc, lam0 = 7.714914, 0.28

        def n_exact(lam):
            return math.sqrt(1 + s_osc * lam ** 2 / (lam ** 2 - lam0 ** 2))

        def ng_exact(lam):
            h = 1e-7
            dndl = (n_exact(lam + h) - n_exact(lam - h)) / (2 * h)
            return n_exact(lam) - lam * dndl

        mat = device.default_gap_material()
        for lam in (0.6, 0.637, 0.7):
            assert group_index(mat, lam) == pytest.approx(ng_exact(lam), rel=2e-4)

    def test_edge_rejected(self):
        mat = device.default_gap_material()
        with pytest.raises(ValidationError, match="edge"):
            group_index(mat, mat.dispersion_table[0, 0])


class TestRasterize:
    def grid(self, dr=0.01):
        return GridSpec(dr=dr, dz=dr, r_min=1.1, r_max=3.0, z_min=-1.4, z_max=0.9)

    def test_three_materials_present(self):
        geom = build_geometry({"d": 4.5, "t": 0.13, "h": 0.6})
        imap = rasterize(geom, materials(), self.grid(), 0.637, subpixel=False)
        values = set(np.round(np.unique(imap.eps), 6))
        assert values == {1.0, round(2.42 ** 2, 6), round(3.25 ** 2, 6)}
        assert imap.material.max() == GUIDING and imap.material.min() == VACUUM

    def test_subpixel_adds_boundary_values(self):
        geom = build_geometry({"d": 4.5, "t": 0.13, "h": 0.6})
        imap = rasterize(geom, materials(), self.grid(), 0.637, subpixel=True)
        assert len(np.unique(imap.eps)) > 3
        assert imap.eps.min() >= 1.0 and imap.eps.max() <= 3.25 ** 2 + 1e-9

    def test_flat_diamond_when_no_etch(self):
        geom = build_geometry({"d": 4.5, "t": 0.13, "h": 0.0})
        imap = rasterize(geom, materials(), self.grid(), 0.637, subpixel=False)
        z = imap.z_nodes()
        below = imap.material[:, z < -0.005]
        assert np.all(below == DIAMOND)

    def test_too_coarse_grid_rejected(self):
        geom = build_geometry({"d": 4.5, "t": 0.13, "h": 0.6})
        with pytest.raises(ValidationError, match="coarse"):
            rasterize(geom, materials(), self.grid(dr=0.05), 0.637)

    def test_r_min_inside_disk(self):
        geom = build_geometry({"d": 2.0, "t": 0.13, "h": 0.6})
        with pytest.raises(ValidationError, match="r_min"):
            rasterize(geom, materials(), self.grid(), 0.637)

    def test_uniform_fill(self):
        imap = uniform_index_map(self.grid(dr=0.02), 1.5)
        assert np.all(imap.eps == 2.25)

    def test_disk_volume_error_bounded_by_dr(self):
        # the staircase volume error is O(dr): bounded by ~dr over the
        # annulus width at every resolution (it oscillates with how the rim
        # lands on the grid, so only the bound is asserted)
        geom = build_geometry({"d": 4.5, "t": 0.12, "h": 0.0})
        r_min = 1.1
        width = geom.radius - r_min
        exact = math.pi * (geom.radius ** 2 - r_min ** 2) * 0.12
        for dr in (0.02, 0.01, 0.005):
            grid = GridSpec(dr=dr, dz=0.005, r_min=r_min, r_max=3.0,
                            z_min=-0.3, z_max=0.4)
            imap = rasterize(geom, materials(), grid, 1.2, subpixel=False)
            cells = imap.material == GUIDING
            r = imap.r_nodes()[:, None]
            vol = float(np.sum(cells * r * 2 * math.pi)) * grid.dr * grid.dz
            assert abs(vol - exact) / exact < 1.5 * dr / width
