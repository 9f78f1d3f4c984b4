"""Critical-point counting of minimal foliation functions on translator meshes.

A critical point of F restricted to the surface is a tangency between the
surface and a leaf of the foliation: the surface normal is parallel to the
ambient gradient of F.  Detection works on the per-vertex field

    w = normal x grad(F)/|grad F|,

projected to a per-face frame orthogonal to grad F; zeros are located by the
linear barycentric solve inside each face, with a deterministic tiny field
perturbation so zeros never sit exactly on shared vertices or edges of the
symmetric meshes this package produces.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .energy import gauss_curvatures, vertex_normals
from .grids import GraphGrid
from .mesh import TriMesh
from .reference import GrimReaperSpec, RotationalProfile, eval_grim_reaper, \
    grim_reaper_gradient

_TIEBREAK = np.array([0.6180339887, 0.5866176042, 0.3819660113])


class DegenerateContactError(Exception):
    """Flat contact wider than a few cells; refine the mesh."""


@dataclass(frozen=True)
class FoliationFunction:
    """Minimal foliation function: linear F_v(p) = v.p for a horizontal unit
    vector, or graph-based H(p) = z - h(x, y) for a complete translator h."""

    kind: str
    v: np.ndarray | None = None
    reaper: GrimReaperSpec | None = None
    grid: GraphGrid | None = None
    bowl: RotationalProfile | None = None

    @classmethod
    def linear(cls, v) -> "FoliationFunction":
        v = np.asarray(v, dtype=float)
        if abs(v[2]) > 1e-14:
            raise ValueError("linear foliation vector must be horizontal")
        n = np.linalg.norm(v)
        if n == 0:
            raise ValueError("zero foliation vector")
        return cls("linear", v=v / n)

    @classmethod
    def grim_reaper(cls, spec: GrimReaperSpec) -> "FoliationFunction":
        return cls("reaper", reaper=spec)

    @classmethod
    def from_grid(cls, grid: GraphGrid) -> "FoliationFunction":
        return cls("grid", grid=grid)

    @classmethod
    def from_bowl(cls, profile: RotationalProfile) -> "FoliationFunction":
        return cls("bowl", bowl=profile)

    def evaluate(self, pts: np.ndarray):
        """(values, ambient gradients, domain mask) at the given points."""
        pts = np.atleast_2d(pts)
        n = len(pts)
        if self.kind == "linear":
            vals = pts @ self.v
            grads = np.tile(self.v, (n, 1))
            return vals, grads, np.ones(n, dtype=bool)
        if self.kind == "reaper":
            spec = self.reaper
            across = pts[:, 1] if spec.orientation == "strip-in-y" else pts[:, 0]
            inside = np.abs(across - spec.center_offset) < spec.half_width * (1 - 1e-9)
            vals = np.full(n, np.nan)
            grads = np.zeros((n, 3))
            grads[:, 2] = 1.0
            if inside.any():
                x, y = pts[inside, 0], pts[inside, 1]
                vals[inside] = pts[inside, 2] - eval_grim_reaper(spec, x, y)
                gx, gy = grim_reaper_gradient(spec, x, y)
                grads[inside, 0] = -gx
                grads[inside, 1] = -gy
            return vals, grads, inside
        if self.kind == "grid":
            g = self.grid
            inside = ((pts[:, 0] >= g.x[0]) & (pts[:, 0] <= g.x[-1])
                      & (pts[:, 1] >= g.y[0]) & (pts[:, 1] <= g.y[-1]))
            vals = np.full(n, np.nan)
            grads = np.zeros((n, 3))
            grads[:, 2] = 1.0
            if inside.any():
                x, y = pts[inside, 0], pts[inside, 1]
                vals[inside] = pts[inside, 2] - np.atleast_1d(g.interp(x, y))
                gx, gy = g.grad(x, y)
                grads[inside, 0] = -np.atleast_1d(gx)
                grads[inside, 1] = -np.atleast_1d(gy)
            return vals, grads, inside
        if self.kind == "bowl":
            r = np.hypot(pts[:, 0], pts[:, 1])
            samples = self.bowl.samples
            inside = r <= samples[-1, 0]
            u = np.interp(r, samples[:, 0], samples[:, 1])
            up = np.interp(r, samples[:, 0], samples[:, 2])
            vals = np.where(inside, pts[:, 2] - u, np.nan)
            grads = np.zeros((n, 3))
            grads[:, 2] = 1.0
            rsafe = np.where(r > 1e-12, r, 1.0)
            grads[:, 0] = -up * pts[:, 0] / rsafe
            grads[:, 1] = -up * pts[:, 1] / rsafe
            return vals, grads, inside
        raise ValueError(f"unknown foliation kind {self.kind!r}")

    def describe(self) -> dict:
        if self.kind == "linear":
            return {"family": "linear", "vx": float(self.v[0]), "vy": float(self.v[1])}
        if self.kind == "reaper":
            s = self.reaper
            return {"family": "reaper", "half_width": s.half_width,
                    "tilt": s.tilt_sign, "center": s.center_offset,
                    "orientation": s.orientation}
        return {"family": self.kind}


@dataclass
class CriticalPointRecord:
    location: np.ndarray
    multiplicity: int
    winding: int
    leaf_value: float
    cluster: bool = False


def _mesh_components(mesh: TriMesh) -> np.ndarray:
    parent = np.arange(mesh.n_vertices)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b, c in mesh.faces:
        ra, rb, rc = find(a), find(b), find(c)
        parent[rb] = ra
        parent[find(rc)] = ra
    return np.array([find(i) for i in range(mesh.n_vertices)])


def _local_edge_lengths(mesh: TriMesh) -> np.ndarray:
    V, F = mesh.vertices, mesh.faces
    acc = np.zeros(mesh.n_vertices)
    cnt = np.zeros(mesh.n_vertices)
    for i in range(3):
        j = (i + 1) % 3
        ell = np.linalg.norm(V[F[:, i]] - V[F[:, j]], axis=1)
        for k in (i, j):
            np.add.at(acc, F[:, k], ell)
            np.add.at(cnt, F[:, k], 1.0)
    cnt[cnt == 0] = 1.0
    return acc / cnt


def count_critical_points(mesh: TriMesh, F: FoliationFunction,
                          tol_scale: float = 1e-2):
    """(N, records): interior tangency count, with multiplicity, of F on the
    mesh.  Components contained in a leaf are excluded.  Deterministic for
    fixed inputs."""
    V = mesh.vertices
    vals, grads, inside = F.evaluate(V)
    nus = vertex_normals(mesh)
    gnorm = np.linalg.norm(grads, axis=1)
    gnorm[gnorm == 0] = 1.0
    ghat = grads / gnorm[:, None]
    w = np.cross(nus, ghat)

    comp = _mesh_components(mesh)
    hloc = _local_edge_lengths(mesh)
    boundary = mesh.boundary_vertex_mask()

    # leaf-containment exclusion per component
    excluded = set()
    for label in np.unique(comp):
        sel = comp == label
        if not inside[sel].all():
            continue
        cv = vals[sel]
        scale = max(np.ptp(V[sel], axis=0).max(), 1.0)
        if np.ptp(cv) < 1e-9 * scale:
            excluded.add(label)

    # deterministic tie-break so zeros never sit exactly on vertices/edges
    # of reflection-symmetric meshes
    wmag = np.linalg.norm(w, axis=1)
    delta = 1e-7 * (np.median(wmag[wmag > 0]) if (wmag > 0).any() else 1.0)
    wt = w + delta * _TIEBREAK

    Fv = mesh.faces
    ok = (inside[Fv].all(axis=1)
          & ~boundary[Fv].any(axis=1)
          & ~np.isin(comp[Fv[:, 0]], list(excluded)))
    zeros = []
    flat_cells = []
    faces_idx = np.flatnonzero(ok)
    if faces_idx.size:
        p0, p1, p2 = V[Fv[faces_idx, 0]], V[Fv[faces_idx, 1]], V[Fv[faces_idx, 2]]
        gface = ghat[Fv[faces_idx]].mean(axis=1)
        gface /= np.linalg.norm(gface, axis=1)[:, None]
        # per-face orthonormal frame orthogonal to grad F
        trial = np.where(np.abs(gface[:, [0]]) < 0.9,
                         np.tile([1.0, 0, 0], (len(gface), 1)),
                         np.tile([0, 1.0, 0], (len(gface), 1)))
        ea = np.cross(gface, trial)
        ea /= np.linalg.norm(ea, axis=1)[:, None]
        eb = np.cross(gface, ea)
        W = np.empty((len(faces_idx), 3, 2))
        for k in range(3):
            wk = wt[Fv[faces_idx, k]]
            W[:, k, 0] = np.einsum("ij,ij->i", wk, ea)
            W[:, k, 1] = np.einsum("ij,ij->i", wk, eb)

        hface = hloc[Fv[faces_idx]].mean(axis=1)
        flat = (np.abs(W).max(axis=(1, 2)) < tol_scale * hface)
        flat_cells = faces_idx[flat]

        # linear barycentric root: W0*l0 + W1*l1 + W2*(1-l0-l1) = 0
        A00 = W[:, 0, 0] - W[:, 2, 0]
        A01 = W[:, 1, 0] - W[:, 2, 0]
        A10 = W[:, 0, 1] - W[:, 2, 1]
        A11 = W[:, 1, 1] - W[:, 2, 1]
        det = A00 * A11 - A01 * A10
        rhs0, rhs1 = -W[:, 2, 0], -W[:, 2, 1]
        good = np.abs(det) > 1e-300
        l0 = np.where(good, (rhs0 * A11 - rhs1 * A01) / np.where(good, det, 1.0), -1.0)
        l1 = np.where(good, (A00 * rhs1 - A10 * rhs0) / np.where(good, det, 1.0), -1.0)
        l2 = 1.0 - l0 - l1
        eps = -1e-9
        hit = (l0 >= eps) & (l1 >= eps) & (l2 >= eps)
        for m in np.flatnonzero(hit):
            pos = l0[m] * p0[m] + l1[m] * p1[m] + l2[m] * p2[m]
            zeros.append((pos, int(np.sign(det[m])), float(hface[m])))

    # flat-contact guard: a connected run of flat cells wider than ~3 cells
    if len(flat_cells) > 0:
        flat_set = set(int(f) for f in flat_cells)
        adj = {}
        edge_of = {}
        for fid in flat_set:
            a, b, c = (int(v) for v in Fv[fid])
            for e in ((min(a, b), max(a, b)), (min(b, c), max(b, c)),
                      (min(a, c), max(a, c))):
                if e in edge_of and edge_of[e] in flat_set:
                    adj.setdefault(fid, set()).add(edge_of[e])
                    adj.setdefault(edge_of[e], set()).add(fid)
                edge_of[e] = fid
        seen = set()
        for fid in flat_set:
            if fid in seen:
                continue
            stack, patch = [fid], []
            seen.add(fid)
            while stack:
                cur = stack.pop()
                patch.append(cur)
                for nb in adj.get(cur, ()):
                    if nb not in seen:
                        seen.add(nb)
                        stack.append(nb)
            if len(patch) > 12:  # > roughly 3 cells across
                raise DegenerateContactError(
                    f"flat contact across {len(patch)} cells; refine the mesh")

    # cluster zeros that are the same point seen from adjacent cells
    records = []
    used = np.zeros(len(zeros), dtype=bool)
    for i, (pos, wind, h) in enumerate(zeros):
        if used[i]:
            continue
        members = [i]
        used[i] = True
        for j in range(i + 1, len(zeros)):
            if not used[j] and np.linalg.norm(zeros[j][0] - pos) < 0.75 * h:
                members.append(j)
                used[j] = True
        net = sum(zeros[j][1] for j in members)
        if net == 0 and len(members) > 1:
            continue  # grazing pair, no transversal tangency
        loc = np.mean([zeros[j][0] for j in members], axis=0)
        leaf = float(F.evaluate(loc[None, :])[0][0])
        records.append(CriticalPointRecord(
            location=loc, multiplicity=max(abs(net), 1), winding=net,
            leaf_value=leaf, cluster=len(members) > 1))
    n_total = sum(r.multiplicity for r in records)
    return n_total, records


def waist_from_gauss_map(mesh: TriMesh, tol: float = 1e-12):
    """Zero level set of (normal . e3) chained into polylines.

    Empty for graphs (normal never horizontal); a single closed curve for
    small-neck annuli.  Flat vertical components violate the precondition.
    """
    f = vertex_normals(mesh)[:, 2]
    comp = _mesh_components(mesh)
    for label in np.unique(comp):
        sel = comp == label
        if np.abs(f[sel]).max() < 1e-9:
            raise ValueError("mesh has a flat vertical component")
    return _isolines(mesh, f)


def _isolines(mesh: TriMesh, f: np.ndarray) -> list[np.ndarray]:
    segments = {}
    V = mesh.vertices

    def vkey(i):
        return ("v", int(i))

    def ekey(i, j):
        return ("e", min(int(i), int(j)), max(int(i), int(j)))

    def epoint(i, j):
        t = f[i] / (f[i] - f[j])
        return (1.0 - t) * V[i] + t * V[j]

    for a, b, c in mesh.faces:
        ids = [int(a), int(b), int(c)]
        zero = [i for i in ids if f[i] == 0.0]
        pos = [i for i in ids if f[i] > 0.0]
        neg = [i for i in ids if f[i] < 0.0]
        pts = []
        if len(zero) == 2:
            pts = [(vkey(zero[0]), V[zero[0]]), (vkey(zero[1]), V[zero[1]])]
        elif len(zero) == 1 and pos and neg:
            i, j = pos[0], neg[0]
            pts = [(vkey(zero[0]), V[zero[0]]), (ekey(i, j), epoint(i, j))]
        elif not zero and pos and neg:
            lone, pair = (pos[0], neg) if len(pos) == 1 else (neg[0], pos)
            pts = [(ekey(lone, pair[0]), epoint(lone, pair[0])),
                   (ekey(lone, pair[1]), epoint(lone, pair[1]))]
        if len(pts) == 2 and pts[0][0] != pts[1][0]:
            key = tuple(sorted((pts[0][0], pts[1][0])))
            segments[key] = (pts[0], pts[1])

    adj = {}
    coords = {}
    for (ka, pa), (kb, pb) in segments.values():
        adj.setdefault(ka, []).append(kb)
        adj.setdefault(kb, []).append(ka)
        coords[ka] = pa
        coords[kb] = pb
    visited = set()
    chains = []

    def walk(start, nxt):
        chain = [start, nxt]
        visited.add(tuple(sorted((start, nxt))))
        while True:
            cur = chain[-1]
            step = None
            for cand in adj[cur]:
                e = tuple(sorted((cur, cand)))
                if e not in visited:
                    step = cand
                    visited.add(e)
                    break
            if step is None:
                break
            chain.append(step)
        return chain

    ends = sorted(k for k, vs in adj.items() if len(vs) == 1)
    for start in ends:
        for nxt in adj[start]:
            if tuple(sorted((start, nxt))) not in visited:
                chains.append(walk(start, nxt))
    for start in sorted(adj):
        for nxt in adj[start]:
            if tuple(sorted((start, nxt))) not in visited:
                chains.append(walk(start, nxt))
    return [np.array([coords[k] for k in chain]) for chain in chains]


def linear_sweep_vectors(n: int = 64) -> list[np.ndarray]:
    """Horizontal directions offset half a step so the coordinate axes are
    avoided (bounds are proved for dense generic families first)."""
    angles = np.pi * (np.arange(n) + 0.5) / n
    return [np.array([np.cos(a), np.sin(a), 0.0]) for a in angles]


def reaper_sweep_specs(mesh: TriMesh, n_centers: int = 8,
                       widths=(np.pi / 2, 2.0, 2.5, 3.0)) -> list[GrimReaperSpec]:
    """Grim reaper foliation sample: both strip orientations, offset centers."""
    lo = mesh.vertices[:, :2].min(axis=0)
    hi = mesh.vertices[:, :2].max(axis=0)
    specs = []
    for orientation, axis in (("strip-in-y", 1), ("strip-in-x", 0)):
        span = hi[axis] - lo[axis]
        centers = lo[axis] + span * (np.arange(n_centers) + 0.37) / n_centers
        for b in widths:
            for c in centers:
                specs.append(GrimReaperSpec(half_width=b, tilt_sign=1,
                                            center_offset=float(c),
                                            orientation=orientation))
    return specs


def verify_counting_bounds(mesh: TriMesh, n_linear: int = 64,
                           n_centers: int = 8,
                           widths=(np.pi / 2, 2.0, 2.5, 3.0)) -> dict:
    """Sweep the linear and grim-reaper foliation families and report counts.

    Violations (linear N not in {0, 2}, reaper N > 8, nonnegative Gauss
    curvature at a linear critical point) are report entries, not exceptions.
    """
    K = gauss_curvatures(mesh)
    V = mesh.vertices
    report = {"linear": {"max": 0, "entries": [], "violations": []},
              "reaper": {"max": 0, "entries": [], "violations": []}}

    for v in linear_sweep_vectors(n_linear):
        fol = FoliationFunction.linear(v)
        n, recs = count_critical_points(mesh, fol)
        entry = dict(fol.describe(), N=n)
        report["linear"]["entries"].append(entry)
        report["linear"]["max"] = max(report["linear"]["max"], n)
        if n not in (0, 2):
            report["linear"]["violations"].append(
                dict(entry, reason="count not in {0, 2}"))
        for r in recs:
            vid = int(np.argmin(np.linalg.norm(V - r.location, axis=1)))
            if K[vid] >= 0:
                report["linear"]["violations"].append(
                    dict(entry, reason="nonnegative Gauss curvature",
                         K=float(K[vid])))

    for spec in reaper_sweep_specs(mesh, n_centers=n_centers, widths=widths):
        fol = FoliationFunction.grim_reaper(spec)
        n, _ = count_critical_points(mesh, fol)
        entry = dict(fol.describe(), N=n)
        report["reaper"]["entries"].append(entry)
        report["reaper"]["max"] = max(report["reaper"]["max"], n)
        if n > 8:
            report["reaper"]["violations"].append(
                dict(entry, reason="count exceeds 8"))
    report["ok"] = not (report["linear"]["violations"]
                        or report["reaper"]["violations"])
    return report
