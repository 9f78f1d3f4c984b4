"""Measurement suite on reference meshes with known geometry."""

import numpy as np
import pytest

from translab.diagnostics import (
    StructureError,
    area_growth_fit,
    classify_cap,
    lipschitz_check,
    neck_catenoid_deviation,
    neck_metrics,
    psi_profile,
    run_diagnostics,
    sideways_graph_check,
    width_estimates,
    wing_profiles,
)
from translab.mesh import TriMesh, graph_mesh
from translab.reference import catenoid_reference, rotational_annulus_mesh


@pytest.fixture(scope="module")
def rot1():
    return rotational_annulus_mesh(1.0, span=5.0, n_theta=96)


class TestNeckMetrics:
    def test_rotational_annulus(self, rot1):
        x_m, y_m, z_m = neck_metrics(rot1)
        h = 2 * np.pi / 96
        assert x_m == pytest.approx(1.0, abs=h)
        assert y_m == pytest.approx(1.0, abs=h)
        assert z_m == pytest.approx(0.0, abs=h)

    def test_catenoid_self_deviation(self):
        cat = catenoid_reference(1.0, n_z=81, n_theta=96)
        dev = neck_catenoid_deviation(cat)
        assert dev < 5e-3

    def test_empty_slice_rejected(self):
        # a patch strictly on one side of {y=0}
        x = np.linspace(0.0, 1.0, 5)
        y = np.linspace(1.0, 2.0, 5)
        u = np.zeros((5, 5))
        with pytest.raises(StructureError):
            neck_metrics(graph_mesh(x, y, u))


class TestWingProfiles:
    def test_meet_at_neck(self, rot1):
        (xl, zl), (xu, zu) = wing_profiles(rot1)
        assert xl[0] == pytest.approx(xu[0], abs=1e-9)
        assert zl[0] == pytest.approx(zu[0], abs=1e-9)
        x_m, _, z_m = neck_metrics(rot1)
        assert xl[0] == pytest.approx(x_m, abs=1e-12)
        # lower wing decreases, upper wing initially rises for the
        # rotational annulus
        assert np.all(np.diff(zl) <= 1e-9)

    def test_ordering(self, rot1):
        (xl, zl), (xu, zu) = wing_profiles(rot1)
        xs = np.linspace(xl[0] + 0.1, min(xl[-1], xu[-1]) - 0.1, 20)
        low = np.interp(xs, xl, zl)
        up = np.interp(xs, xu, zu)
        assert np.all(low < up)


class TestWidths:
    def test_rotational_annulus_widths_match_slab(self, rot1):
        # the two wings of the rotational annulus straddle y = 0 and reach
        # the slab half-widths of the truncated profile
        w = width_estimates(rot1, depth_band=3.0)
        assert 0 < w.b_m <= w.B_m
        arr = np.array(w.samples)
        assert np.all(arr[:, 2] + arr[:, 3] <= w.b_m + w.B_m + 0.02 + 1e-9)


class TestPsiLipschitz:
    def test_catenoid_satisfies_generous_bound(self):
        cat = catenoid_reference(1.0, n_z=41, n_theta=48)
        ok, worst, _ = lipschitz_check(cat, s_b=2.0)
        assert ok, worst


class TestAreaGrowth:
    def test_flat_disk_ratio_is_pi(self):
        x = np.linspace(-2, 2, 60)
        y = np.linspace(-2, 2, 60)
        mesh = graph_mesh(x, y, np.zeros((60, 60)))
        mid = int(np.argmin(np.linalg.norm(mesh.vertices, axis=1)))
        c1, slope, table = area_growth_fit(mesh, centers=[mid])
        assert slope <= 2.05
        row = table[0]
        ratios = [a / r ** 2 for a, r in zip(row["areas"][:3], row["radii"][:3])]
        assert np.allclose(ratios, np.pi, rtol=0.08)

    def test_reaper_patch_bounded(self):
        x = np.linspace(-1, 1, 50)
        y = np.linspace(-1.2, 1.2, 50)
        u = np.tile(np.log(np.cos(y)), (50, 1))
        mesh = graph_mesh(x, y, u)
        c1, slope, _ = area_growth_fit(mesh, n_centers=12)
        assert np.isfinite(c1)
        assert slope <= 2.05

    def test_annulus_ratio_finite(self, rot1):
        c1, slope, _ = area_growth_fit(rot1, n_centers=10)
        assert np.isfinite(c1) and c1 > 0


class TestSideways:
    def test_rotational_annulus_not_sideways_graph(self, rot1):
        # both wings flare outward: lines parallel to x cross twice
        assert sideways_graph_check(rot1, n_rays=4000) is False

    def test_half_catenoid_like_graph_is_sideways(self):
        # a surface x = 2 + z^2 - y^2/3 over (y, z): genuinely one-to-one
        y = np.linspace(-1, 1, 40)
        z = np.linspace(-1, 1, 40)
        yy, zz = np.meshgrid(y, z, indexing="ij")
        xx = 2.0 + zz ** 2 - yy ** 2 / 3
        verts = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])
        faces = []
        for i in range(39):
            for j in range(39):
                a, b = i * 40 + j, (i + 1) * 40 + j
                c, d = (i + 1) * 40 + j + 1, i * 40 + j + 1
                faces.append((a, b, c))
                faces.append((a, c, d))
        mesh = TriMesh(verts, np.array(faces))
        assert sideways_graph_check(mesh, n_rays=4000) is True


class TestRunDiagnostics:
    def test_rotational_annulus_report(self, rot1):
        rep = run_diagnostics(rot1, depth_band=3.0, with_sideways=False)
        assert rep.x_m == pytest.approx(1.0, abs=0.07)
        assert rep.passed_all(), rep.invariants
        d = rep.to_dict()
        assert d["cap_class"] in ("capped", "uncapped", "indeterminate")

    def test_profiles_csv(self, rot1, tmp_path):
        rep = run_diagnostics(rot1, depth_band=3.0, with_area_growth=False,
                              with_catenoid=False, with_sideways=False)
        out = tmp_path / "profiles.csv"
        rep.profiles_to_csv(out)
        lines = out.read_text().splitlines()
        assert lines[0] == "x,phi_lower,phi_upper"
        assert len(lines) > 10
