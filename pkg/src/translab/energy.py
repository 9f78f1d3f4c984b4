"""Conformally weighted area functional and discrete curvature operators.

Translators are minimal surfaces for the metric exp(-z) * (Euclidean), so the
discrete energy of a mesh is

    E = sum over faces of exp(-zbar_f) * area(f),

with zbar_f the face-centroid height (one-point quadrature).  The gradient
below is the exact derivative of this discrete energy, so it must match
finite differences to rounding; that consistency is the correctness contract
of the whole solver stack.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .mesh import TriMesh

AREA_FLOOR = 1e-14


class DegenerateFaceError(Exception):
    def __init__(self, face_id: int, area: float):
        self.face_id = int(face_id)
        self.area = float(area)
        super().__init__(f"face {face_id} is degenerate (area {area:.3e})")


class MeshBoundaryError(Exception):
    """Operation requested at a boundary vertex where it is undefined."""


def _face_geometry(vertices: np.ndarray, faces: np.ndarray):
    p0 = vertices[faces[:, 0]]
    p1 = vertices[faces[:, 1]]
    p2 = vertices[faces[:, 2]]
    n = np.cross(p1 - p0, p2 - p0)
    two_area = np.linalg.norm(n, axis=1)
    return p0, p1, p2, n, two_area


def _check_degenerate(two_area: np.ndarray):
    bad = np.where(two_area < 2.0 * AREA_FLOOR)[0]
    if bad.size:
        raise DegenerateFaceError(bad[0], 0.5 * two_area[bad[0]])


def face_areas(mesh: TriMesh) -> np.ndarray:
    _, _, _, _, two_area = _face_geometry(mesh.vertices, mesh.faces)
    return 0.5 * two_area


def face_normals(mesh: TriMesh) -> np.ndarray:
    _, _, _, n, two_area = _face_geometry(mesh.vertices, mesh.faces)
    _check_degenerate(two_area)
    return n / two_area[:, None]


def weighted_area(mesh: TriMesh) -> float:
    """Total area in the exp(-z)-weighted metric."""
    _, _, _, _, two_area = _face_geometry(mesh.vertices, mesh.faces)
    _check_degenerate(two_area)
    zbar = mesh.vertices[mesh.faces, 2].mean(axis=1)
    return float(np.sum(np.exp(-zbar) * 0.5 * two_area))


def weighted_area_gradient(mesh: TriMesh) -> np.ndarray:
    """Exact derivative of weighted_area w.r.t. each vertex position, (n, 3).

    Zero (to solver tolerance) exactly on discrete translators.
    """
    V, F = mesh.vertices, mesh.faces
    p0, p1, p2, n, two_area = _face_geometry(V, F)
    _check_degenerate(two_area)
    area = 0.5 * two_area
    nhat = n / two_area[:, None]
    zbar = V[F, 2].mean(axis=1)
    w = np.exp(-zbar)

    # grad_i area = 0.5 * nhat x e_i with e_i the opposite edge
    e = np.stack([p2 - p1, p0 - p2, p1 - p0], axis=1)          # (m, 3, 3)
    ga = 0.5 * np.cross(nhat[:, None, :], e)                   # (m, 3, 3)

    contrib = w[:, None, None] * ga
    contrib[:, :, 2] -= (w * area / 3.0)[:, None]

    grad = np.zeros_like(V)
    np.add.at(grad, F.ravel(), contrib.reshape(-1, 3))
    return grad


def _cross_matrices(v: np.ndarray) -> np.ndarray:
    """Batched skew matrices [v]_x with [v]_x w = v x w; v is (..., 3)."""
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def weighted_area_hessian(mesh: TriMesh) -> sp.csr_matrix:
    """Exact second derivative of weighted_area, sparse (3n, 3n).

    DOF ordering is 3 * vertex + component.
    """
    V, F = mesh.vertices, mesh.faces
    m = len(F)
    p0, p1, p2, n, two_area = _face_geometry(V, F)
    _check_degenerate(two_area)
    area = 0.5 * two_area
    nhat = n / two_area[:, None]
    zbar = V[F, 2].mean(axis=1)
    w = np.exp(-zbar)

    e = np.stack([p2 - p1, p0 - p2, p1 - p0], axis=1)          # (m, 3, 3)
    ga = 0.5 * np.cross(nhat[:, None, :], e)                   # grad_i area

    P = np.eye(3)[None] - nhat[:, :, None] * nhat[:, None, :]  # (m, 3, 3)
    Ei = _cross_matrices(e)                                    # (m, 3, 3, 3)
    Nh = _cross_matrices(nhat)                                 # (m, 3, 3)

    # area Hessian blocks: 0.5 * (-[e_i]x P [e_j]x / |n| + c_ij [nhat]x)
    PEj = np.einsum("mab,mjbc->mjac", P, Ei)                   # P [e_j]x
    HA = -0.5 * np.einsum("miab,mjbc->mijac", Ei, PEj) / two_area[:, None, None, None, None]
    c = np.zeros((3, 3))
    for i in range(3):
        c[i, (i + 2) % 3] = 1.0
        c[i, (i + 1) % 3] = -1.0
    HA = HA + 0.5 * c[None, :, :, None, None] * Nh[:, None, None, :, :]

    ez = np.array([0.0, 0.0, 1.0])
    H = w[:, None, None, None, None] * HA
    H = H - (w[:, None, None, None, None] / 3.0) * (
        ga[:, :, None, :, None] * ez[None, None, None, None, :]
    )
    H = H - (w[:, None, None, None, None] / 3.0) * (
        ez[None, None, None, :, None] * ga[:, None, :, None, :]
    )
    H += (w * area / 9.0)[:, None, None, None, None] * (ez[:, None] * ez[None, :])[None, None, None]

    rows = (3 * F[:, :, None, None, None] + np.arange(3)[None, None, None, :, None])
    rows = np.broadcast_to(rows, (m, 3, 3, 3, 3))
    cols = (3 * F[:, None, :, None, None] + np.arange(3)[None, None, None, None, :])
    cols = np.broadcast_to(cols, (m, 3, 3, 3, 3))
    nd = 3 * mesh.n_vertices
    return sp.coo_matrix(
        (H.ravel(), (rows.ravel(), cols.ravel())), shape=(nd, nd)
    ).tocsr()


# ---------------------------------------------------------------------------
# Discrete normals and curvature
# ---------------------------------------------------------------------------

def vertex_normals(mesh: TriMesh) -> np.ndarray:
    """Area-weighted unit vertex normals."""
    _, _, _, n, two_area = _face_geometry(mesh.vertices, mesh.faces)
    _check_degenerate(two_area)
    acc = np.zeros_like(mesh.vertices)
    np.add.at(acc, mesh.faces.ravel(), np.repeat(n, 3, axis=0).reshape(-1, 3))
    norms = np.linalg.norm(acc, axis=1)
    norms[norms == 0] = 1.0
    return acc / norms[:, None]


def _vertex_rings(mesh: TriMesh):
    rings = [[] for _ in range(mesh.n_vertices)]
    for fid, (a, b, c) in enumerate(mesh.faces):
        rings[a].append(fid)
        rings[b].append(fid)
        rings[c].append(fid)
    return rings


def mean_curvature_vectors(mesh: TriMesh) -> np.ndarray:
    """Cotangent-Laplacian mean curvature vector per vertex (sum convention).

    On a translator mesh this approximates -(e3 . normal) * normal.  Values at
    boundary vertices are meaningless.
    """
    V, F = mesh.vertices, mesh.faces
    p = V[F]                                                   # (m, 3, 3)
    acc = np.zeros_like(V)
    amix = np.zeros(len(V))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        u = p[:, j] - p[:, i]
        v = p[:, k] - p[:, i]
        cross = np.linalg.norm(np.cross(u, v), axis=1)
        cross[cross == 0] = np.inf
        cot = np.einsum("ij,ij->i", u, v) / cross
        # angle at corner i weights the opposite edge (j, k)
        np.add.at(acc, F[:, j], 0.5 * cot[:, None] * (V[F[:, k]] - V[F[:, j]]))
        np.add.at(acc, F[:, k], 0.5 * cot[:, None] * (V[F[:, j]] - V[F[:, k]]))
        np.add.at(amix, F[:, i], np.linalg.norm(np.cross(u, v), axis=1) / 6.0)
    amix[amix == 0] = np.inf
    return acc / amix[:, None]


def gauss_curvatures(mesh: TriMesh) -> np.ndarray:
    """Angle-defect Gaussian curvature per vertex (boundary values meaningless)."""
    V, F = mesh.vertices, mesh.faces
    p = V[F]
    defect = np.full(len(V), 2.0 * np.pi)
    amix = np.zeros(len(V))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        u = p[:, j] - p[:, i]
        v = p[:, k] - p[:, i]
        cosang = np.einsum("ij,ij->i", u, v) / (
            np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
        )
        ang = np.arccos(np.clip(cosang, -1.0, 1.0))
        np.add.at(defect, F[:, i], -ang)
        np.add.at(amix, F[:, i], np.linalg.norm(np.cross(u, v), axis=1) / 6.0)
    amix[amix == 0] = np.inf
    return defect / amix


def discrete_normal_and_curvature(mesh: TriMesh, vertex_id: int):
    """(unit normal, mean curvature scalar, |A| estimate) at an interior vertex.

    The scalar is the full trace (sum of principal curvatures) signed against
    the returned normal; |A| is estimated from H^2 - 2K.
    """
    if mesh.boundary_vertex_mask()[vertex_id]:
        raise MeshBoundaryError(f"boundary curvature undefined at vertex {vertex_id}")
    nu = vertex_normals(mesh)[vertex_id]
    hv = mean_curvature_vectors(mesh)[vertex_id]
    h = float(np.dot(hv, nu))
    k = float(gauss_curvatures(mesh)[vertex_id])
    a2 = max(h * h - 2.0 * k, 0.0)
    return nu, h, float(np.sqrt(a2))
