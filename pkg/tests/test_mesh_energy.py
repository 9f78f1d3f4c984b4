"""Geometry core: weighted area, exact gradients, curvature, slicing, I/O."""

import numpy as np
import pytest
from scipy.integrate import quad

from translab.energy import (
    DegenerateFaceError,
    MeshBoundaryError,
    discrete_normal_and_curvature,
    face_normals,
    mean_curvature_vectors,
    vertex_normals,
    weighted_area,
    weighted_area_gradient,
    weighted_area_hessian,
)
from translab.mesh import (
    MeshError,
    TriMesh,
    graph_mesh,
    load_obj,
    polylines_to_csv,
    save_obj,
    slice_mesh,
    subdivide,
)
from translab.reference import GrimReaperSpec, catenoid_reference, eval_grim_reaper


def unit_square(z=0.0):
    v = np.array([[0, 0, z], [1, 0, z], [1, 1, z], [0, 1, z]], dtype=float)
    f = np.array([[0, 1, 2], [0, 2, 3]])
    return TriMesh(v, f)


def reaper_patch(nx=40, ny=40, x0=0.0, x1=1.0, y1=1.0):
    """Graph of log(cos y) over [x0, x1] x [-y1, y1]."""
    x = np.linspace(x0, x1, nx)
    y = np.linspace(-y1, y1, ny)
    u = np.zeros((nx, ny))
    u[:] = np.log(np.cos(y))[None, :]
    return graph_mesh(x, y, u)


def vertical_strip(nx=15, nz=15, width=1.0, height=1.0):
    """Flat patch of the vertical plane {y = 0}."""
    xs = np.linspace(0, width, nx)
    zs = np.linspace(0, height, nz)
    xx, zz = np.meshgrid(xs, zs, indexing="ij")
    v = np.column_stack([xx.ravel(), np.zeros(xx.size), zz.ravel()])
    faces = []
    for i in range(nx - 1):
        for j in range(nz - 1):
            a, b = i * nz + j, (i + 1) * nz + j
            c, d = (i + 1) * nz + j + 1, i * nz + j + 1
            faces.append((a, b, c))
            faces.append((a, c, d))
    return TriMesh(v, np.array(faces))


def fd_gradient(mesh, vids, eps=1e-5):
    g = np.zeros((len(vids), 3))
    base = mesh.vertices.copy()
    for row, v in enumerate(vids):
        for k in range(3):
            step = eps * max(1.0, abs(base[v, k]))
            for sgn in (+1, -1):
                pts = base.copy()
                pts[v, k] += sgn * step
                g[row, k] += sgn * weighted_area(mesh.with_vertices(pts))
            g[row, k] /= 2 * step
    return g


class TestWeightedArea:
    def test_unit_square_at_zero(self):
        assert weighted_area(unit_square(0.0)) == pytest.approx(1.0, abs=1e-15)

    def test_lifted_square_conformal_weight(self):
        assert weighted_area(unit_square(1.0)) == pytest.approx(np.exp(-1.0), rel=1e-14)

    def test_reaper_patch_matches_quadrature(self):
        # weighted area of the log(cos y) graph reduces to a 1D integral in y
        oracle, err = quad(lambda y: 1.0 / np.cos(y) ** 2, -1.0, 1.0)
        assert err < 1e-10
        assert oracle == pytest.approx(2.0 * np.tan(1.0), rel=1e-12)
        got = weighted_area(reaper_patch(nx=80, ny=320))
        assert got == pytest.approx(oracle, rel=2e-4)

    def test_degenerate_face_rejected(self):
        v = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0]], dtype=float)
        f = np.array([[0, 1, 2], [0, 2, 3]])
        with pytest.raises(DegenerateFaceError) as exc:
            weighted_area(TriMesh(v, f))
        assert exc.value.face_id == 0

    def test_horizontal_translation_invariance(self):
        m = reaper_patch(20, 20)
        base = weighted_area(m)
        shifted = m.with_vertices(m.vertices + np.array([3.7, -1.9, 0.0]))
        assert weighted_area(shifted) == pytest.approx(base, rel=1e-12)

    def test_vertical_translation_scaling(self):
        m = reaper_patch(20, 20)
        base = weighted_area(m)
        c = 0.83
        lifted = m.with_vertices(m.vertices + np.array([0.0, 0.0, c]))
        assert weighted_area(lifted) == pytest.approx(base * np.exp(-c), rel=1e-12)


class TestGradient:
    @pytest.mark.parametrize("builder", [
        lambda: reaper_patch(25, 25),
        lambda: vertical_strip(12, 12),
        lambda: catenoid_reference(1.0, n_z=20, n_theta=24),
    ])
    def test_matches_finite_differences(self, builder):
        mesh = builder()
        rng = np.random.default_rng(7)
        interior = np.flatnonzero(mesh.interior_vertex_mask())
        vids = rng.choice(interior, size=min(100, len(interior)), replace=False)
        g = weighted_area_gradient(mesh)[vids]
        fd = fd_gradient(mesh, vids)
        # relative to the per-vertex energy scale; near-stationary meshes have
        # |g| at the finite-difference noise floor
        scale = max(np.abs(g).max(), weighted_area(mesh) / mesh.n_vertices)
        assert np.abs(g - fd).max() <= 1e-6 * scale

    def test_perturbation_raises_gradient_norm(self):
        mesh = reaper_patch(30, 30)
        base = np.linalg.norm(weighted_area_gradient(mesh))
        rng = np.random.default_rng(3)
        noisy = mesh.vertices.copy()
        interior = mesh.interior_vertex_mask()
        noisy[interior] += 0.01 * rng.standard_normal(noisy[interior].shape)
        pert = np.linalg.norm(weighted_area_gradient(mesh.with_vertices(noisy)))
        assert pert > base

    def test_refinement_reduces_interior_gradient(self):
        coarse = reaper_patch(17, 17)
        fine = reaper_patch(33, 33)

        def interior_norm(m):
            g = weighted_area_gradient(m)[m.interior_vertex_mask()]
            return np.linalg.norm(g, axis=1).max()

        assert interior_norm(coarse) / interior_norm(fine) >= 2.0

    def test_hessian_matches_gradient_fd(self):
        mesh = reaper_patch(8, 8)
        H = weighted_area_hessian(mesh).toarray()
        n = mesh.n_vertices
        eps = 1e-6
        rng = np.random.default_rng(11)
        for v in rng.choice(n, size=6, replace=False):
            for k in range(3):
                pts = mesh.vertices.copy()
                pts[v, k] += eps
                gp = weighted_area_gradient(mesh.with_vertices(pts))
                pts[v, k] -= 2 * eps
                gm = weighted_area_gradient(mesh.with_vertices(pts))
                col = (gp - gm).ravel() / (2 * eps)
                assert np.abs(H[:, 3 * v + k] - col).max() < 1e-5 * max(1.0, np.abs(col).max())


class TestCurvature:
    def test_flat_plane_patch(self):
        mesh = vertical_strip()
        vid = int(np.flatnonzero(mesh.interior_vertex_mask())[5])
        nu, h, a = discrete_normal_and_curvature(mesh, vid)
        assert abs(h) < 1e-8
        assert a < 1e-6
        assert abs(abs(nu[1]) - 1.0) < 1e-12

    def test_reaper_translator_identity(self):
        # mean curvature vector approximates -(e3 . nu) nu on a translator
        mesh = reaper_patch(60, 60, x0=-0.5, x1=0.5, y1=0.5)
        hv = mean_curvature_vectors(mesh)
        nus = vertex_normals(mesh)
        interior = np.flatnonzero(mesh.interior_vertex_mask())
        target = -(nus[interior, 2])[:, None] * nus[interior]
        err = np.linalg.norm(hv[interior] - target, axis=1)
        assert np.median(err) < 0.05

    def test_catenoid_is_minimal(self):
        mesh = catenoid_reference(1.0, n_z=50, n_theta=64)
        hv = mean_curvature_vectors(mesh)
        interior = mesh.interior_vertex_mask()
        assert np.linalg.norm(hv[interior], axis=1).max() < 0.02

    def test_boundary_vertex_rejected(self):
        mesh = vertical_strip()
        bid = int(np.flatnonzero(mesh.boundary_vertex_mask())[0])
        with pytest.raises(MeshBoundaryError):
            discrete_normal_and_curvature(mesh, bid)


class TestSlice:
    def test_plane_above_mesh_empty(self):
        assert slice_mesh(reaper_patch(), "z", 10.0) == []

    def test_reaper_ridge(self):
        polys = slice_mesh(reaper_patch(21, 21), "y", 0.0)
        assert len(polys) == 1
        assert np.abs(polys[0][:, 2]).max() < 1e-14
        assert np.abs(polys[0][:, 1]).max() < 1e-14

    def test_points_on_plane_and_boundary_endpoints(self):
        mesh = catenoid_reference(1.0, n_z=21, n_theta=32)
        polys = slice_mesh(mesh, "z", 0.37)
        assert polys
        for poly in polys:
            assert np.abs(poly[:, 2] - 0.37).max() < 1e-12

    def test_open_slice_ends_on_boundary(self):
        mesh = reaper_patch(21, 21)
        polys = slice_mesh(mesh, "x", 0.5)
        assert len(polys) == 1
        ends = polys[0][[0, -1]]
        # patch spans y in [-1, 1]; slice endpoints sit on its boundary edges
        assert np.allclose(np.abs(ends[:, 1]), 1.0, atol=1e-12)

    def test_csv_export(self, tmp_path):
        polys = slice_mesh(reaper_patch(), "x", 0.5)
        out = tmp_path / "slice.csv"
        polylines_to_csv(polys, out)
        lines = out.read_text().splitlines()
        assert lines[0] == "x,y,z,component"
        assert len(lines) == 1 + sum(len(p) for p in polys)


class TestMeshStructure:
    def test_validate_and_euler(self):
        mesh = reaper_patch(9, 9)
        mesh.validate(enforce_symmetry=True)
        assert mesh.euler_characteristic() == 1  # disk
        cat = catenoid_reference(1.0, n_z=12, n_theta=16)
        cat.validate()
        assert cat.euler_characteristic() == 0  # annulus

    def test_orientation_violation_detected(self):
        v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], dtype=float)
        f = np.array([[0, 1, 2], [1, 3, 2]])
        TriMesh(v, f).validate()
        bad = np.array([[0, 1, 2], [1, 2, 3]])  # edge (1,2) twice same direction
        with pytest.raises(MeshError):
            TriMesh(v, bad).validate()

    def test_obj_roundtrip(self, tmp_path):
        mesh = catenoid_reference(0.7, n_z=10, n_theta=12)
        path = tmp_path / "cat.obj"
        save_obj(mesh, path)
        back = load_obj(path)
        assert np.array_equal(back.faces, mesh.faces)
        assert np.array_equal(back.vertices, mesh.vertices)

    def test_obj_rejects_quads(self, tmp_path):
        path = tmp_path / "quad.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
        with pytest.raises(MeshError):
            load_obj(path)

    def test_subdivide_preserves_surface(self):
        mesh = reaper_patch(9, 9)
        fine = subdivide(mesh)
        assert fine.n_faces == 4 * mesh.n_faces
        fine.validate(enforce_symmetry=True)
        # PL surface unchanged, so plain area is preserved
        from translab.energy import face_areas
        assert face_areas(fine).sum() == pytest.approx(face_areas(mesh).sum(), rel=1e-12)


class TestFlatStripTranslator:
    def test_normal_gradient_component_vanishes(self):
        # vertical planes are translators: out-of-plane forcing is exactly zero
        mesh = vertical_strip(14, 14)
        g = weighted_area_gradient(mesh)
        assert np.abs(g[mesh.interior_vertex_mask(), 1]).max() < 1e-14
