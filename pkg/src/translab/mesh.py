"""Oriented triangle meshes: topology checks, OBJ I/O, slicing, subdivision.

Meshes are carriers for the compact translating annuli and for tessellated
graphs.  A mesh is treated as immutable after construction; every operation
returns new arrays.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np


class MeshError(Exception):
    """Invalid mesh topology or geometry."""


@dataclass
class TriMesh:
    """Oriented triangle mesh with optional symmetry tags.

    vertices : (n, 3) float array of positions.
    faces    : (m, 3) int array, consistently oriented.
    boundary_loops : ordered vertex-index cycles covering exactly the edges
        that belong to a single face.  Computed on demand if not supplied.
    on_plane_x0 / on_plane_y0 : per-vertex flags; tagged vertices must have
        the corresponding coordinate exactly zero when symmetry is enforced.
    """

    vertices: np.ndarray
    faces: np.ndarray
    boundary_loops: list = field(default_factory=list)
    on_plane_x0: np.ndarray | None = None
    on_plane_y0: np.ndarray | None = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.faces = np.asarray(self.faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshError("vertices must be an (n, 3) array")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise MeshError("faces must be an (m, 3) array")
        n = len(self.vertices)
        if self.on_plane_x0 is None:
            self.on_plane_x0 = np.zeros(n, dtype=bool)
        if self.on_plane_y0 is None:
            self.on_plane_y0 = np.zeros(n, dtype=bool)
        if not self.boundary_loops:
            self.boundary_loops = trace_boundary_loops(self.faces)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def boundary_vertex_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        for loop in self.boundary_loops:
            mask[loop] = True
        return mask

    def interior_vertex_mask(self) -> np.ndarray:
        return ~self.boundary_vertex_mask()

    def euler_characteristic(self) -> int:
        e = len(unique_edges(self.faces))
        return self.n_vertices - e + self.n_faces

    def with_vertices(self, vertices: np.ndarray) -> "TriMesh":
        """Same connectivity, new positions."""
        return TriMesh(
            np.asarray(vertices, dtype=float),
            self.faces,
            boundary_loops=self.boundary_loops,
            on_plane_x0=self.on_plane_x0,
            on_plane_y0=self.on_plane_y0,
        )

    def validate(self, enforce_symmetry: bool = False) -> None:
        """Raise MeshError on any violated structural invariant."""
        n = self.n_vertices
        f = self.faces
        if f.min(initial=0) < 0 or f.max(initial=-1) >= n:
            raise MeshError("face references vertex index out of range")
        if np.any(f[:, 0] == f[:, 1]) or np.any(f[:, 1] == f[:, 2]) or np.any(f[:, 0] == f[:, 2]):
            raise MeshError("face references a repeated vertex")

        directed = {}
        for fid, (a, b, c) in enumerate(f):
            for u, v in ((a, b), (b, c), (c, a)):
                if (u, v) in directed:
                    raise MeshError(
                        f"inconsistent orientation: directed edge ({u},{v}) "
                        f"in faces {directed[(u, v)]} and {fid}"
                    )
                directed[(u, v)] = fid
        boundary = {(u, v) for (u, v) in directed if (v, u) not in directed}
        loop_edges = set()
        for loop in self.boundary_loops:
            loop = np.asarray(loop)
            for k in range(len(loop)):
                loop_edges.add((int(loop[k]), int(loop[(k + 1) % len(loop)])))
        if boundary != loop_edges:
            raise MeshError("boundary loops do not enumerate the boundary edges")

        if enforce_symmetry:
            if np.any(self.vertices[self.on_plane_x0, 0] != 0.0):
                raise MeshError("vertex tagged on_plane_x0 has x != 0")
            if np.any(self.vertices[self.on_plane_y0, 1] != 0.0):
                raise MeshError("vertex tagged on_plane_y0 has y != 0")


def unique_edges(faces: np.ndarray) -> np.ndarray:
    """Undirected edge list (k, 2), each edge once."""
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e = np.sort(e, axis=1)
    return np.unique(e, axis=0)


def boundary_directed_edges(faces: np.ndarray) -> list[tuple[int, int]]:
    """Directed edges that appear in exactly one face, face orientation kept."""
    directed = set()
    for a, b, c in faces:
        directed.add((int(a), int(b)))
        directed.add((int(b), int(c)))
        directed.add((int(c), int(a)))
    return [(u, v) for (u, v) in directed if (v, u) not in directed]


def trace_boundary_loops(faces: np.ndarray) -> list[np.ndarray]:
    """Chain the boundary edges into ordered vertex cycles."""
    edges = boundary_directed_edges(faces)
    nxt = {}
    for u, v in edges:
        if u in nxt:
            raise MeshError(f"non-manifold boundary at vertex {u}")
        nxt[u] = v
    loops = []
    seen = set()
    for start in sorted(nxt):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        v = nxt[start]
        while v != start:
            loop.append(v)
            seen.add(v)
            v = nxt[v]
        loops.append(np.array(loop, dtype=np.int64))
    return loops


# ---------------------------------------------------------------------------
# OBJ I/O.  ASCII only: "v x y z" with 17 significant digits, "f i j k"
# 1-based.  Readers reject anything that is not a triangle.
# ---------------------------------------------------------------------------

def save_obj(mesh: TriMesh, path) -> None:
    buf = io.StringIO()
    for p in mesh.vertices:
        buf.write(f"v {p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
    for a, b, c in mesh.faces:
        buf.write(f"f {a + 1} {b + 1} {c + 1}\n")
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def load_obj(path) -> TriMesh:
    vertices = []
    faces = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "v":
                if len(parts) != 4:
                    raise MeshError(f"line {lineno}: vertex must have 3 coordinates")
                try:
                    vertices.append([float(x) for x in parts[1:]])
                except ValueError:
                    raise MeshError(f"line {lineno}: bad vertex coordinate") from None
            elif parts[0] == "f":
                if len(parts) != 4:
                    raise MeshError(f"line {lineno}: only triangular faces supported")
                try:
                    idx = [int(x.split("/")[0]) - 1 for x in parts[1:]]
                except ValueError:
                    raise MeshError(f"line {lineno}: bad face index") from None
                faces.append(idx)
            # other OBJ keywords silently ignored
    if not vertices or not faces:
        raise MeshError("OBJ contains no triangle mesh")
    verts = np.array(vertices, dtype=float)
    f = np.array(faces, dtype=np.int64)
    if f.min() < 0 or f.max() >= len(verts):
        raise MeshError("face index out of range")
    mesh = TriMesh(verts, f)
    # retag symmetry planes from exact zeros
    mesh.on_plane_x0 = verts[:, 0] == 0.0
    mesh.on_plane_y0 = verts[:, 1] == 0.0
    return mesh


# ---------------------------------------------------------------------------
# Plane slicing
# ---------------------------------------------------------------------------

_AXIS = {"x": 0, "y": 1, "z": 2}


def slice_mesh(mesh: TriMesh, axis: str, value: float) -> list[np.ndarray]:
    """Intersect the mesh with the plane {axis = value}.

    Returns the exact triangle-plane intersection chained into maximal
    connected polylines, each a (k, 3) array.  An empty list is a valid
    result.  Edges lying inside the plane are kept once.
    """
    k = _AXIS[axis]
    d = mesh.vertices[:, k] - value
    segments = {}

    def vkey(i):
        return ("v", int(i))

    def ekey(i, j):
        return ("e", min(int(i), int(j)), max(int(i), int(j)))

    def epoint(i, j):
        t = d[i] / (d[i] - d[j])
        return (1.0 - t) * mesh.vertices[i] + t * mesh.vertices[j]

    for a, b, c in mesh.faces:
        ids = [int(a), int(b), int(c)]
        zero = [i for i in ids if d[i] == 0.0]
        pos = [i for i in ids if d[i] > 0.0]
        neg = [i for i in ids if d[i] < 0.0]
        pts = []
        if len(zero) == 3:
            continue  # face lies in the plane; its edges come from neighbours
        if len(zero) == 2:
            pts = [(vkey(zero[0]), mesh.vertices[zero[0]]),
                   (vkey(zero[1]), mesh.vertices[zero[1]])]
        elif len(zero) == 1 and pos and neg:
            i, j = pos[0], neg[0]
            pts = [(vkey(zero[0]), mesh.vertices[zero[0]]), (ekey(i, j), epoint(i, j))]
        elif not zero and pos and neg:
            lone, pair = (pos[0], neg) if len(pos) == 1 else (neg[0], pos)
            pts = [(ekey(lone, pair[0]), epoint(lone, pair[0])),
                   (ekey(lone, pair[1]), epoint(lone, pair[1]))]
        if len(pts) == 2 and pts[0][0] != pts[1][0]:
            key = tuple(sorted((pts[0][0], pts[1][0])))
            segments[key] = (pts[0], pts[1])

    # chain segments sharing endpoint keys into maximal polylines
    adj = {}
    for (ka, _), (kb, _) in segments.values():
        adj.setdefault(ka, []).append(kb)
        adj.setdefault(kb, []).append(ka)
    coords = {}
    for (ka, pa), (kb, pb) in segments.values():
        coords[ka] = pa
        coords[kb] = pb

    visited_edges = set()
    polylines = []

    def walk(start, nxt):
        chain = [start, nxt]
        visited_edges.add(tuple(sorted((start, nxt))))
        while True:
            cur = chain[-1]
            step = None
            for cand in adj[cur]:
                e = tuple(sorted((cur, cand)))
                if e not in visited_edges:
                    step = cand
                    visited_edges.add(e)
                    break
            if step is None:
                break
            chain.append(step)
        return chain

    ends = sorted(k for k, vs in adj.items() if len(vs) == 1)
    for start in ends:
        for nxt in adj[start]:
            if tuple(sorted((start, nxt))) not in visited_edges:
                polylines.append(walk(start, nxt))
    # remaining closed loops
    for start in sorted(adj):
        for nxt in adj[start]:
            if tuple(sorted((start, nxt))) not in visited_edges:
                polylines.append(walk(start, nxt))
    return [np.array([coords[k] for k in chain]) for chain in polylines]


def polylines_to_csv(polylines: list[np.ndarray], path) -> None:
    """CSV export with header x,y,z,component."""
    with open(path, "w") as fh:
        fh.write("x,y,z,component\n")
        for ci, poly in enumerate(polylines):
            for p in poly:
                fh.write(f"{p[0]:.17g},{p[1]:.17g},{p[2]:.17g},{ci}\n")


# ---------------------------------------------------------------------------
# Refinement and graph tessellation
# ---------------------------------------------------------------------------

def subdivide(mesh: TriMesh) -> TriMesh:
    """One 1-to-4 midpoint refinement of the piecewise-linear surface."""
    verts = [mesh.vertices]
    edge_mid = {}
    new_pts = []
    n = mesh.n_vertices

    def midpoint(i, j):
        key = (min(i, j), max(i, j))
        if key not in edge_mid:
            edge_mid[key] = n + len(new_pts)
            new_pts.append(0.5 * (mesh.vertices[i] + mesh.vertices[j]))
        return edge_mid[key]

    faces = []
    for a, b, c in mesh.faces:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        faces.extend([(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)])
    vertices = np.vstack(verts + [np.array(new_pts)]) if new_pts else mesh.vertices
    out = TriMesh(vertices, np.array(faces, dtype=np.int64))
    x0 = np.zeros(len(vertices), dtype=bool)
    y0 = np.zeros(len(vertices), dtype=bool)
    x0[: n] = mesh.on_plane_x0
    y0[: n] = mesh.on_plane_y0
    for (i, j), m in edge_mid.items():
        x0[m] = mesh.on_plane_x0[i] and mesh.on_plane_x0[j]
        y0[m] = mesh.on_plane_y0[i] and mesh.on_plane_y0[j]
    out.on_plane_x0 = x0
    out.on_plane_y0 = y0
    return out


def graph_mesh(x: np.ndarray, y: np.ndarray, u: np.ndarray) -> TriMesh:
    """Tessellate a height field u[i, j] over the grid x[i], y[j].

    Orientation gives normals with positive vertical component.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    nx, ny = u.shape
    if nx != len(x) or ny != len(y):
        raise MeshError("grid shape mismatch")
    xx, yy = np.meshgrid(x, y, indexing="ij")
    vertices = np.column_stack([xx.ravel(), yy.ravel(), u.ravel()])

    def vid(i, j):
        return i * ny + j

    faces = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            faces.append((v00, v10, v11))
            faces.append((v00, v11, v01))
    mesh = TriMesh(vertices, np.array(faces, dtype=np.int64))
    mesh.on_plane_x0 = vertices[:, 0] == 0.0
    mesh.on_plane_y0 = vertices[:, 1] == 0.0
    return mesh
