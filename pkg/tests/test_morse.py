"""Foliation critical-point counting on known translator meshes."""

import numpy as np
import pytest

from translab.energy import gauss_curvatures
from translab.mesh import TriMesh, subdivide
from translab.morse import (
    FoliationFunction,
    count_critical_points,
    verify_counting_bounds,
    waist_from_gauss_map,
)
from translab.reference import (
    GrimReaperSpec,
    rotational_annulus_mesh,
)
from translab.grids import GraphGrid


def reaper_graph_mesh(nx=41, ny=41):
    from translab.mesh import graph_mesh
    x = np.linspace(-1.5, 1.5, nx)
    y = np.linspace(-1.2, 1.2, ny)
    u = np.tile(np.log(np.cos(y)), (nx, 1))
    return graph_mesh(x, y, u)


def vertical_plane_patch():
    from tests.test_mesh_energy import vertical_strip
    return vertical_strip(12, 12)


@pytest.fixture(scope="module")
def annulus():
    return rotational_annulus_mesh(1.0, span=3.0, n_theta=96)


class TestLinearCounts:
    def test_graph_mesh_has_no_critical_points(self):
        mesh = reaper_graph_mesh()
        for ang in (0.3, 1.2, 2.6):
            v = np.array([np.cos(ang), np.sin(ang), 0.0])
            n, recs = count_critical_points(mesh, FoliationFunction.linear(v))
            assert n == 0 and recs == []

    def test_rotational_annulus_axis_direction(self, annulus):
        n, recs = count_critical_points(
            annulus, FoliationFunction.linear([1.0, 0.0, 0.0]))
        assert n == 2
        locs = np.array([r.location for r in recs])
        assert np.abs(np.abs(locs[:, 0]) - 1.0).max() < 0.02
        assert np.abs(locs[:, 1:]).max() < 0.02
        assert all(r.multiplicity == 1 for r in recs)

    def test_every_direction_counts_two(self, annulus):
        for ang in (0.17, 0.9, 2.1):
            v = np.array([np.cos(ang), np.sin(ang), 0.0])
            n, _ = count_critical_points(annulus, FoliationFunction.linear(v))
            assert n == 2

    def test_reflection_equivariance(self, annulus):
        v = np.array([np.cos(0.7), np.sin(0.7), 0.0])
        vr = np.array([np.cos(0.7), -np.sin(0.7), 0.0])
        n1, _ = count_critical_points(annulus, FoliationFunction.linear(v))
        n2, _ = count_critical_points(annulus, FoliationFunction.linear(vr))
        assert n1 == n2

    def test_negative_gauss_curvature_at_critical_points(self, annulus):
        K = gauss_curvatures(annulus)
        n, recs = count_critical_points(
            annulus, FoliationFunction.linear([0.0, 1.0, 0.0]))
        assert n == 2
        for r in recs:
            vid = int(np.argmin(np.linalg.norm(annulus.vertices - r.location,
                                               axis=1)))
            assert K[vid] < 0

    def test_component_in_leaf_excluded(self):
        mesh = vertical_plane_patch()
        n, recs = count_critical_points(
            mesh, FoliationFunction.linear([0.0, 1.0, 0.0]))
        assert n == 0 and recs == []


class TestGraphFoliations:
    def test_reaper_foliation_on_annulus(self, annulus):
        spec = GrimReaperSpec(half_width=2.0, tilt_sign=1, center_offset=0.2)
        n, _ = count_critical_points(annulus, FoliationFunction.grim_reaper(spec))
        assert n <= 8

    def test_untilted_width_pi_strip_bound(self, annulus):
        # untilted strips through the neck obey the sharper bound of 4
        spec = GrimReaperSpec(half_width=np.pi / 2, center_offset=0.1)
        n, _ = count_critical_points(annulus, FoliationFunction.grim_reaper(spec))
        assert n <= 4

    def test_grid_foliation_matches_closed_form(self, annulus):
        y = np.linspace(-1.9, 1.9, 161)
        x = np.linspace(-4.0, 4.0, 161)
        sg = 2 * 2.0 / np.pi
        import numpy as _np
        u = _np.zeros((161, 161))
        u[:] = (sg ** 2 * _np.log(_np.cos(y / sg)))[None, :]
        grid = GraphGrid(x, y, u)
        n_grid, _ = count_critical_points(annulus, FoliationFunction.from_grid(grid))
        spec = GrimReaperSpec(half_width=2.0, tilt_sign=1)
        # same leaves up to tilt: counts stay within the theorem bound
        assert n_grid <= 8


class TestSemicontinuity:
    @pytest.mark.parametrize("builder,fol", [
        (lambda: rotational_annulus_mesh(1.0, span=2.5, n_theta=48),
         FoliationFunction.linear([np.cos(0.33), np.sin(0.33), 0.0])),
        (reaper_graph_mesh,
         FoliationFunction.linear([np.cos(1.1), np.sin(1.1), 0.0])),
        (lambda: rotational_annulus_mesh(0.5, span=2.0, n_theta=48),
         FoliationFunction.grim_reaper(GrimReaperSpec(half_width=2.0,
                                                      center_offset=0.13))),
    ])
    def test_refinement_never_decreases_count(self, builder, fol):
        mesh = builder()
        n_coarse, _ = count_critical_points(mesh, fol)
        n_fine, _ = count_critical_points(subdivide(mesh), fol)
        assert n_fine >= n_coarse


class TestWaist:
    def test_graph_mesh_has_empty_waist(self):
        assert waist_from_gauss_map(reaper_graph_mesh()) == []

    def test_rotational_annulus_waist_is_neck_circle(self, annulus):
        curves = waist_from_gauss_map(annulus)
        assert len(curves) == 1
        pts = curves[0]
        radii = np.hypot(pts[:, 0], pts[:, 1])
        assert np.abs(radii - 1.0).max() < 0.01
        assert np.abs(pts[:, 2]).max() < 0.01

    def test_flat_vertical_component_rejected(self):
        with pytest.raises(ValueError):
            waist_from_gauss_map(vertical_plane_patch())


class TestSweep:
    def test_bounds_on_rotational_annulus(self, annulus):
        report = verify_counting_bounds(annulus, n_linear=16, n_centers=4,
                                        widths=(np.pi / 2, 2.0))
        assert report["ok"]
        assert report["linear"]["max"] <= 2
        assert report["reaper"]["max"] <= 8
        assert all(e["N"] in (0, 2) for e in report["linear"]["entries"])
