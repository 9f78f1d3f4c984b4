"""Compact translating annuli spanning nested rectangles in {z = 0}.

Surfaces are computed as critical points of the exp(-z)-weighted area over
structured annular meshes: a normalized gradient flow brings the initializer
near the basin, then Newton on the full first-variation system finishes (the
necked solutions are saddle points, so descent alone cannot converge there).

Reflection symmetry across {x=0} and {y=0} is enforced structurally: vertex
orbits are averaged and mirrored after every step, with exact sign flips, so
symmetric solves stay bitwise symmetric.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .diagnostics import neck_metrics
from .energy import (vertex_normals, weighted_area, weighted_area_gradient,
                     weighted_area_hessian)
from .graphsolver import DirichletProblem, solve_dirichlet
from .grids import GraphGrid
from .mesh import TriMesh


class AnnulusError(Exception):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


class NeckPinchError(AnnulusError):
    """Mesh approached the z-axis; re-initialize with a catenoid neck."""


@dataclass
class SolveSettings:
    grad_tol: float = 2e-3       # relative per-vertex normal residual
    flow_steps: int = 30
    flow_cap: float = 0.2        # vertex motion per step, in min edge lengths
    newton_max_iter: int = 60
    newton_backtracks: int = 10
    stall_iters: int = 10
    axis_floor: float = 1e-3


@dataclass
class AnnulusProblem:
    """Boundary data (nested rectangles), resolution, and solve schedule."""

    a: float
    b: float
    A: float
    B: float
    n_rings: int = 40
    n_quarter: int = 24           # angular samples per quadrant (n_theta = 4x)
    init: str = "graph"           # graph | catenoid | warm
    waist: float = 0.1
    symmetric: bool = True
    settings: SolveSettings = field(default_factory=SolveSettings)
    warm_mesh: TriMesh | None = None
    graph_grid_n: tuple = (97, 65)
    corner_index: int | None = None
    boundary_rings: tuple | None = None   # explicit (inner, outer) (T,2) rings

    def __post_init__(self):
        if not (0 < self.a < self.A):
            raise ValueError("need 0 < a < A: boundaries not nested")
        if not (0 < self.b <= self.B):
            raise ValueError("need 0 < b <= B: boundaries not nested")
        if (self.a, self.b) == (self.A, self.B):
            raise ValueError("rectangles must be distinct")
        if self.init not in ("graph", "catenoid", "warm"):
            raise ValueError(f"unknown initializer {self.init!r}")
        if self.corner_index is None:
            self.corner_index = default_corner_index(
                self.a + self.A, self.b + self.B, self.n_quarter)

    def echo(self) -> dict:
        return {"a": self.a, "b": self.b, "A": self.A, "B": self.B,
                "n_rings": self.n_rings, "n_quarter": self.n_quarter,
                "init": self.init, "waist": self.waist,
                "symmetric": self.symmetric}


@dataclass
class AnnulusSolution:
    mesh: TriMesh
    problem: AnnulusProblem
    converged: bool
    gradient_norm: float          # full per-vertex gradient max-norm
    normal_residual: float        # first-variation (normal) residual, absolute
    normal_residual_rel: float    # relative to local exp(-z) h^2 scales
    x_m: float
    y_m: float
    z_m: float
    area_g: float
    ring_shape: tuple
    energy_history: list = field(default_factory=list)
    family_t: float | None = None

    def normalized_mesh(self) -> TriMesh:
        """Vertical shift by -z(M), putting the neck point at height 0."""
        return self.mesh.with_vertices(
            self.mesh.vertices - np.array([0.0, 0.0, self.z_m]))


# ---------------------------------------------------------------------------
# Structured annular meshes
# ---------------------------------------------------------------------------

def _quarter_chain(w_x: float, w_y: float, n: int, corner: int | None = None
                   ) -> np.ndarray:
    """Quadrant polyline on the rectangle boundary from (w_x, 0) to (0, w_y),
    n+1 points with the corner at index `corner` (so paired inner/outer
    chains share their corner index and the stitched rings stay shear-free).
    """
    if corner is None:
        corner = default_corner_index(w_x, w_y, n)
    n1 = min(max(1, corner), n - 1)
    n2 = n - n1
    edge1 = np.column_stack([np.full(n1 + 1, w_x), np.linspace(0.0, w_y, n1 + 1)])
    edge2 = np.column_stack([np.linspace(w_x, 0.0, n2 + 1)[1:], np.full(n2, w_y)])
    return np.vstack([edge1, edge2])


def default_corner_index(w_x: float, w_y: float, n: int) -> int:
    return min(max(1, int(round(n * w_y / (w_x + w_y)))), n - 1)


def _full_ring(quarter: np.ndarray) -> np.ndarray:
    """Close a quadrant chain to a full ring with exact sign flips."""
    q = quarter
    n = len(q) - 1
    ring = np.empty((4 * n, 2))
    ring[:n + 1] = q
    ring[n:2 * n + 1] = np.column_stack([-q[::-1][:, 0], q[::-1][:, 1]])
    ring[2 * n:3 * n + 1] = -q
    ring[3 * n:] = np.column_stack([q[::-1][:, 0], -q[::-1][:, 1]])[:-1]
    return ring


def _ring_mesh(rings_xy: np.ndarray, rings_z: np.ndarray) -> TriMesh:
    """Stitch (R, T, 2) plan rings with (R, T) heights into an annulus."""
    R, T, _ = rings_xy.shape
    verts = np.column_stack([rings_xy.reshape(-1, 2),
                             rings_z.reshape(-1, 1)])
    faces = []
    for j in range(R - 1):
        base = j * T
        for k in range(T):
            a = base + k
            b = base + (k + 1) % T
            c = a + T
            d = b + T
            faces.append((a, d, b))
            faces.append((a, c, d))
    mesh = TriMesh(verts, np.array(faces, dtype=np.int64))
    mesh.on_plane_x0 = verts[:, 0] == 0.0
    mesh.on_plane_y0 = verts[:, 1] == 0.0
    return mesh


def _mirror_maps(R: int, T: int):
    """Vertex index maps for the reflections across {x=0} and {y=0}."""
    n = T // 4
    k = np.arange(T)
    mx_k = (2 * n - k) % T
    my_k = (T - k) % T
    base = (np.arange(R) * T)[:, None]
    mx = (base + mx_k[None, :]).ravel()
    my = (base + my_k[None, :]).ravel()
    return mx, my


class _Symmetrizer:
    """Orbit-average gradients and mirror positions with exact sign flips."""

    def __init__(self, R: int, T: int):
        self.mx, self.my = _mirror_maps(R, T)
        self.mxy = self.mx[self.my]

    def project_gradient(self, g: np.ndarray) -> np.ndarray:
        gx = g[self.mx] * np.array([-1.0, 1.0, 1.0])
        gy = g[self.my] * np.array([1.0, -1.0, 1.0])
        gxy = g[self.mxy] * np.array([-1.0, -1.0, 1.0])
        return 0.25 * (g + gx + gy + gxy)

    def enforce_positions(self, p: np.ndarray) -> np.ndarray:
        px = p[self.mx] * np.array([-1.0, 1.0, 1.0])
        py = p[self.my] * np.array([1.0, -1.0, 1.0])
        pxy = p[self.mxy] * np.array([-1.0, -1.0, 1.0])
        out = 0.25 * (p + px + py + pxy)
        # exact zeros on the symmetry planes
        out[np.abs(out[:, 0]) < 1e-300, 0] = 0.0
        out[np.abs(out[:, 1]) < 1e-300, 1] = 0.0
        return out


def graph_annulus_mesh(problem: AnnulusProblem) -> TriMesh:
    """Flat washer between the rectangles, the thin-branch initializer."""
    R, n = problem.n_rings, problem.n_quarter
    qi = _quarter_chain(problem.a, problem.b, n, problem.corner_index)
    qo = _quarter_chain(problem.A, problem.B, n, problem.corner_index)
    ri = _full_ring(qi)
    ro = _full_ring(qo)
    s = np.linspace(0.0, 1.0, R)[:, None, None]
    rings_xy = (1 - s) * ri[None] + s * ro[None]
    rings_z = np.zeros(rings_xy.shape[:2])
    return _ring_mesh(rings_xy, rings_z)


def _solve_dome(half_x: float, half_y: float, grid_n: tuple) -> GraphGrid:
    nx, ny = grid_n
    if half_x < half_y:
        nx, ny = ny, nx
    return solve_dirichlet(DirichletProblem(
        (-half_x, half_x), (-half_y, half_y), nx=nx, ny=ny,
        boundary={"left": 0.0, "right": 0.0, "bottom": 0.0, "top": 0.0}))


def catenoid_annulus_mesh(problem: AnnulusProblem,
                          domes: tuple | None = None) -> TriMesh:
    """Two zero-boundary domes joined by a catenoidal neck around the axis.

    The inner rectangle climbs the lower dome to a rim of radius r0, the neck
    tube descends to the waist and rises to the upper dome's rim, and the
    upper dome runs back out to the outer rectangle.
    """
    w = problem.waist
    if domes is None:
        dome_in = _solve_dome(problem.a, problem.b, problem.graph_grid_n)
        dome_out = _solve_dome(problem.A, problem.B, problem.graph_grid_n)
    else:
        dome_in, dome_out = domes
    d1 = float(dome_in.interp(0.0, 0.0))
    d2 = float(dome_out.interp(0.0, 0.0))
    gap = max(d2 - d1, 1e-3)
    tau0 = float(np.arccosh(max(np.cosh(gap / (2 * w)), 1.0 + 1e-9)))
    r0 = w * np.cosh(tau0)
    r0 = min(r0, 0.45 * problem.a)
    tau0 = float(np.arccosh(r0 / w))

    n = problem.n_quarter
    T = 4 * n
    theta_q = 0.5 * np.pi * np.arange(n + 1) / n
    circle_q = np.column_stack([np.cos(theta_q), np.sin(theta_q)])
    circle = _full_ring(circle_q)

    R_total = problem.n_rings
    n_neck = max(6, R_total // 5)
    n_in = (R_total - n_neck) // 2
    n_out = R_total - n_neck - n_in

    rings_xy = []
    rings_z = []
    qi = _quarter_chain(problem.a, problem.b, n, problem.corner_index)
    ri = _full_ring(qi)
    # inner rectangle -> lower rim, graded toward the rim
    for t in np.linspace(0.0, 1.0, n_in + 1)[:-1] ** 0.8:
        xy = (1 - t) * ri + t * r0 * circle
        z = np.array([dome_in.interp(p[0], p[1]) for p in xy])
        rings_xy.append(xy)
        rings_z.append(z)
    # neck tube from the lower rim up to the upper rim
    z1 = np.array([dome_in.interp(*p) for p in (r0 * circle)])
    z2 = np.array([dome_out.interp(*p) for p in (r0 * circle)])
    zc, g = 0.5 * (z1 + z2), 0.5 * (z2 - z1)
    for sN in np.linspace(-1.0, 1.0, n_neck + 1):
        r = w * np.cosh(tau0 * sN)
        rings_xy.append(r * circle)
        rings_z.append(zc + g * np.sinh(tau0 * sN) / np.sinh(tau0))
    # upper rim -> outer rectangle
    qo = _quarter_chain(problem.A, problem.B, n, problem.corner_index)
    ro = _full_ring(qo)
    for t in (np.linspace(0.0, 1.0, n_out + 1)[1:]) ** 1.25:
        xy = (1 - t) * r0 * circle + t * ro
        z = np.array([dome_out.interp(p[0], p[1]) for p in xy]) * (1 - t) ** 0.0
        if t == 1.0:
            z = np.zeros(T)
            xy = ro
        rings_xy.append(xy)
        rings_z.append(z)
    return _ring_mesh(np.array(rings_xy), np.array(rings_z))


# ---------------------------------------------------------------------------
# Solver
# ---------------------------------------------------------------------------

def _min_edge_length(mesh: TriMesh) -> float:
    V, F = mesh.vertices, mesh.faces
    e = np.concatenate([V[F[:, 0]] - V[F[:, 1]], V[F[:, 1]] - V[F[:, 2]],
                        V[F[:, 2]] - V[F[:, 0]]])
    return float(np.linalg.norm(e, axis=1).min())


def _axis_distance(mesh: TriMesh) -> float:
    return float(np.hypot(mesh.vertices[:, 0], mesh.vertices[:, 1]).min())


class _AnnulusSolver:
    def __init__(self, mesh: TriMesh, problem: AnnulusProblem):
        self.problem = problem
        self.settings = problem.settings
        self.mesh = mesh
        R = mesh.n_vertices // (4 * problem.n_quarter)
        self.ring_shape = (R, 4 * problem.n_quarter)
        self.sym = _Symmetrizer(*self.ring_shape) if problem.symmetric else None
        self.interior = mesh.interior_vertex_mask()
        self.energy_history: list[float] = []
        if problem.symmetric:
            self.mesh = mesh.with_vertices(
                self.sym.enforce_positions(mesh.vertices))

    def _projected_gradient(self) -> np.ndarray:
        g = weighted_area_gradient(self.mesh)
        if self.sym is not None:
            g = self.sym.project_gradient(g)
        g[~self.interior] = 0.0
        return g

    def _guard(self):
        floor = self.settings.axis_floor
        d = _axis_distance(self.mesh)
        if d < floor:
            raise NeckPinchError(
                f"neck pinched: min axis distance {d:.3e} < {floor:.1e}; "
                "re-initialize with a catenoid neck", self.energy_history)

    def flow(self, steps: int | None = None):
        steps = self.settings.flow_steps if steps is None else steps
        if steps <= 0:
            return
        energy = weighted_area(self.mesh)
        self.energy_history.append(energy)
        for _ in range(steps):
            g = self._projected_gradient()
            gmax = np.linalg.norm(g, axis=1).max()
            if gmax < self.settings.grad_tol:
                return
            dt = self.settings.flow_cap * _min_edge_length(self.mesh) / gmax
            for _ in range(25):
                trial = self.mesh.with_vertices(self.mesh.vertices - dt * g)
                if self.sym is not None:
                    trial = trial.with_vertices(
                        self.sym.enforce_positions(trial.vertices))
                try:
                    e_new = weighted_area(trial)
                except Exception:
                    dt *= 0.5
                    continue
                if e_new <= energy:
                    break
                dt *= 0.5
            else:
                return  # flow stalled; hand over to Newton
            self.mesh = trial
            energy = e_new
            self.energy_history.append(energy)
            self._guard()

    def _vertex_scales(self) -> np.ndarray:
        """Per-vertex magnitude of a generic first-variation entry:
        conformal weight times squared local edge length."""
        V, F = self.mesh.vertices, self.mesh.faces
        acc = np.zeros(len(V))
        cnt = np.zeros(len(V))
        for i in range(3):
            j = (i + 1) % 3
            ell = np.linalg.norm(V[F[:, i]] - V[F[:, j]], axis=1)
            for k in (i, j):
                np.add.at(acc, F[:, k], ell)
                np.add.at(cnt, F[:, k], 1.0)
        cnt[cnt == 0] = 1.0
        h = acc / cnt
        return np.exp(-V[:, 2]) * h * h

    def _normal_residual(self, g: np.ndarray) -> float:
        """Max interior |g . normal| relative to the local discretization
        scale: the absolute residual floor tracks exp(-z) h^2, so the
        convergence criterion must too."""
        nus = vertex_normals(self.mesh)
        gn = np.abs(np.einsum("ij,ij->i", g, nus))
        rel = gn / self._vertex_scales()
        return float(rel[self.interior].max())

    def absolute_normal_residual(self, g: np.ndarray) -> float:
        nus = vertex_normals(self.mesh)
        gn = np.abs(np.einsum("ij,ij->i", g, nus))
        return float(gn[self.interior].max())

    def newton(self):
        """Newton on the first-variation system in the normal directions.

        Tangential vertex positions are a parametrization, not geometry: the
        full per-vertex gradient carries an O(h^3) quadrature force along the
        surface that no reachable configuration cancels, so convergence is
        declared on the normal component of the gradient.
        """
        st = self.settings
        ids = np.flatnonzero(self.interior)
        nv = self.mesh.n_vertices
        lam = 0.0
        g = self._projected_gradient()
        res = self._normal_residual(g)
        cap = 0.5 * _min_edge_length(self.mesh)
        best_window = res
        since_improved = 0
        for _ in range(st.newton_max_iter):
            if res < st.grad_tol:
                return res, True
            # bail out early when grinding without real progress
            if res < 0.5 * best_window:
                best_window = res
                since_improved = 0
            else:
                since_improved += 1
                if since_improved >= st.stall_iters:
                    return res, False
            nus = vertex_normals(self.mesh)
            rows = np.repeat(3 * ids, 3) + np.tile([0, 1, 2], len(ids))
            cols = np.repeat(np.arange(len(ids)), 3)
            N = sp.coo_matrix((nus[ids].ravel(), (rows, cols)),
                              shape=(3 * nv, len(ids))).tocsr()
            H = weighted_area_hessian(self.mesh)
            Hn = (N.T @ H @ N).tocsc()
            rhs = -(N.T @ g.ravel())
            accepted = False
            for lam_try in _lambda_ladder(lam, Hn):
                try:
                    A = Hn + lam_try * sp.identity(Hn.shape[0], format="csc") \
                        if lam_try > 0 else Hn
                    delta = spsolve(A, rhs)
                except Exception:
                    continue
                if not np.all(np.isfinite(delta)):
                    continue
                dmax = np.abs(delta).max()
                t = 1.0 if dmax <= cap else cap / dmax
                for _ in range(st.newton_backtracks):
                    verts = self.mesh.vertices.copy()
                    verts[ids] += (t * delta)[:, None] * nus[ids]
                    trial = self.mesh.with_vertices(verts)
                    if self.sym is not None:
                        trial = trial.with_vertices(
                            self.sym.enforce_positions(trial.vertices))
                    try:
                        gt = weighted_area_gradient(trial)
                    except Exception:
                        t *= 0.5
                        continue
                    if self.sym is not None:
                        gt = self.sym.project_gradient(gt)
                    gt[~self.interior] = 0.0
                    save = self.mesh
                    self.mesh = trial
                    rt = self._normal_residual(gt)
                    if rt < res or rt < st.grad_tol:
                        g, res = gt, rt
                        lam = lam_try * 0.3
                        accepted = True
                        break
                    self.mesh = save
                    t *= 0.5
                if accepted:
                    break
            if not accepted:
                return res, False
            self.energy_history.append(weighted_area(self.mesh))
            self._guard()
        return res, res < st.grad_tol


def _lambda_ladder(lam0: float, H) -> list:
    scale = float(np.abs(H.diagonal()).mean()) or 1.0
    ladder = [0.0, 1e-10 * scale, 1e-8 * scale, 1e-6 * scale, 1e-4 * scale,
              1e-2 * scale, scale]
    if lam0 > 0:
        ladder = sorted(set(ladder + [lam0]))
    return ladder


def rotational_seed_mesh(problem: AnnulusProblem, neck_radius: float,
                         lift: float | None = None) -> tuple:
    """Exact translator seed for the necked branch: the rotationally
    invariant translating annulus with the given neck radius, lifted so the
    whole neck sits above {z=0} and truncated there.  Returns (mesh,
    (inner_ring, outer_ring)) with circular boundary rings.
    """
    from .reference import rotational_annulus_profile
    R = neck_radius
    if lift is None:
        lift = max(1.2 * R, min(2.6 * R, 0.45))
    span = max(10.0 * R, 4.0)
    for _ in range(6):
        prof = rotational_annulus_profile(R, span=span, tol=1e-10)
        r, z = prof.samples[:, 0], prof.samples[:, 1] + lift
        below = z < 0
        if below[0] and below[-1]:
            break
        span *= 1.8
    else:
        raise AnnulusError("rotational seed: wings never return to z=0")
    inside = np.flatnonzero(z >= 0)
    lo, hi = inside[0], inside[-1]
    # exact z=0 crossings
    t0 = z[lo - 1] / (z[lo - 1] - z[lo])
    r_in = (1 - t0) * r[lo - 1] + t0 * r[lo]
    t1 = z[hi] / (z[hi] - z[hi + 1])
    r_out = (1 - t1) * r[hi] + t1 * r[hi + 1]
    rr = np.concatenate([[r_in], r[lo:hi + 1], [r_out]])
    zz = np.concatenate([[0.0], z[lo:hi + 1], [0.0]])
    # resample onto n_rings rings, weighted to keep neck aspect bounded
    chain = np.column_stack([rr, np.zeros_like(rr), zz])
    out = _weighted_resample(chain, problem.n_rings, 4 * problem.n_quarter)
    rq, zq = out[:, 0], out[:, 2]
    zq[0] = zq[-1] = 0.0
    n = problem.n_quarter
    theta_q = 0.5 * np.pi * np.arange(n + 1) / n
    circle = _full_ring(np.column_stack([np.cos(theta_q), np.sin(theta_q)]))
    rings_xy = rq[:, None, None] * circle[None]
    rings_z = np.tile(zq[:, None], (1, 4 * n))
    mesh = _ring_mesh(rings_xy, rings_z)
    return mesh, (rq[0] * circle, rq[-1] * circle)


def _continue_rings(solution: AnnulusSolution, target_in: np.ndarray,
                    target_out: np.ndarray, dt_init: float = 0.2,
                    dt_min: float = 1e-4) -> AnnulusSolution:
    """Warm-started boundary-shape continuation from the solution's current
    boundary rings to the target rings (linear interpolation of rings)."""
    T = solution.ring_shape[1]
    start_in = solution.mesh.vertices[:T, :2].copy()
    start_out = solution.mesh.vertices[-T:, :2].copy()
    t, dt = 0.0, dt_init
    current = solution
    while t < 1.0 - 1e-12:
        current = _maintain_mesh(current)
        t_next = min(t + dt, 1.0)
        ri = (1 - t_next) * start_in + t_next * target_in
        ro = (1 - t_next) * start_out + t_next * target_out
        mesh = _morph_to_rings(current.mesh, current.ring_shape, ri, ro)
        problem = replace(current.problem, init="warm", warm_mesh=mesh,
                          boundary_rings=(ri, ro))
        problem.settings = replace(problem.settings, flow_steps=0)
        try:
            current = _solve_problem(problem)
            t = t_next
            dt = min(dt * 1.6, 0.25)
        except AnnulusError:
            dt *= 0.5
            if dt < dt_min:
                raise AnnulusError(
                    f"boundary-shape continuation stalled at t={t:.4f}")
    return current


def _worst_ring_aspect(mesh: TriMesh, ring_shape: tuple) -> float:
    R, T = ring_shape
    V = mesh.vertices
    chain = V.reshape(R, T, 3)
    seg = np.linalg.norm(np.diff(chain, axis=0), axis=2)     # (R-1, T)
    rad = np.hypot(chain[:, :, 0], chain[:, :, 1])
    ang = 2.0 * np.pi * np.maximum(0.5 * (rad[:-1] + rad[1:]), 1e-9) / T
    ratio = seg / ang
    return float(max(ratio.max(), (1.0 / np.maximum(ratio, 1e-12)).max()))


def _maintain_mesh(sol: AnnulusSolution, aspect_limit: float = 10.0
                   ) -> AnnulusSolution:
    """Redistribute rings and re-converge at the same boundary when triangle
    aspect has degraded; otherwise return the solution unchanged."""
    if _worst_ring_aspect(sol.mesh, sol.ring_shape) <= aspect_limit:
        return sol
    T = sol.ring_shape[1]
    mesh = _redistribute_rings(sol.mesh, sol.ring_shape)
    rings = (mesh.vertices[:T, :2].copy(), mesh.vertices[-T:, :2].copy())
    problem = replace(sol.problem, init="warm", warm_mesh=mesh,
                      boundary_rings=sol.problem.boundary_rings or rings)
    problem.settings = replace(problem.settings, flow_steps=0)
    try:
        out = _solve_problem(problem)
        out.family_t = sol.family_t
        return out
    except AnnulusError:
        return sol  # keep the old (still converged) mesh


def _initial_mesh(problem: AnnulusProblem) -> TriMesh:
    if problem.init == "graph":
        return graph_annulus_mesh(problem)
    if problem.warm_mesh is None:
        raise ValueError("warm init requires warm_mesh")
    return problem.warm_mesh


def _solve_problem(problem: AnnulusProblem) -> AnnulusSolution:
    mesh = _initial_mesh(problem)
    solver = _AnnulusSolver(mesh, problem)
    solver.flow()
    res, ok = solver.newton()
    if not ok:
        raise AnnulusError(
            f"annulus solve did not converge: gradient max-norm {res:.3e}",
            history=solver.energy_history)
    out = solver.mesh
    x_m, y_m, z_m = neck_metrics(out)
    g_full = solver._projected_gradient()
    sol = AnnulusSolution(
        mesh=out, problem=problem, converged=True,
        gradient_norm=float(np.linalg.norm(g_full, axis=1).max()),
        normal_residual=solver.absolute_normal_residual(g_full),
        normal_residual_rel=float(res), x_m=x_m, y_m=y_m, z_m=z_m,
        area_g=weighted_area(out), ring_shape=solver.ring_shape,
        energy_history=solver.energy_history)
    _structural_checks(sol)
    return sol


def _necked_via_rotational(problem: AnnulusProblem) -> AnnulusSolution:
    """Necked-branch solve: polish the exact rotational seed with the neck
    radius set by the waist, then continue the circular boundary onto the
    target rectangles."""
    seed_mesh, rings = rotational_seed_mesh(problem, problem.waist)
    seed_problem = replace(problem, init="warm", warm_mesh=seed_mesh,
                           boundary_rings=rings)
    seed_problem.settings = replace(problem.settings, flow_steps=0)
    seed = _solve_problem(seed_problem)
    ri, ro = _rect_rings(problem)
    out = _continue_rings(seed, ri, ro)
    out.problem = replace(out.problem, boundary_rings=None)
    _structural_checks(out)
    return out


def minimize_weighted_area(problem: AnnulusProblem) -> AnnulusSolution:
    """Critical point of the weighted area with the problem's boundary.

    The graph initializer relaxes the flat washer (thin branch).  The
    catenoid initializer targets the necked branch: it polishes the exact
    rotational translating annulus with neck radius equal to the requested
    waist and continues its circular boundary onto the rectangles; Newton
    alone from a glued initializer is not reliable for these saddle points.

    Raises AnnulusError (with history) on non-convergence and NeckPinchError
    if the surface collapses onto the axis.
    """
    if problem.init == "catenoid":
        return _necked_via_rotational(problem)
    return _solve_problem(problem)


def _structural_checks(sol: AnnulusSolution):
    mesh = sol.mesh
    mesh.validate(enforce_symmetry=sol.problem.symmetric)
    if mesh.euler_characteristic() != 0:
        raise AnnulusError("solution lost annular topology")
    p = sol.problem
    if p.boundary_rings is not None:
        T = len(p.boundary_rings[0])
        for ring, target in zip((mesh.vertices[:T], mesh.vertices[-T:]),
                                p.boundary_rings):
            if np.abs(ring[:, :2] - target).max() > 1e-12 \
                    or np.abs(ring[:, 2]).max() > 1e-12:
                raise AnnulusError("boundary left the prescribed curves")
    else:
        for loop, (wx, wy) in zip(mesh.boundary_loops,
                                  ((p.a, p.b), (p.A, p.B))):
            pts = mesh.vertices[loop]
            on_rect = (np.isclose(np.abs(pts[:, 0]), wx, atol=1e-12)
                       | np.isclose(np.abs(pts[:, 1]), wy, atol=1e-12))
            if not on_rect.all() or np.abs(pts[:, 2]).max() > 1e-12:
                raise AnnulusError("boundary left the prescribed rectangles")
    if _axis_distance(mesh) <= 0:
        raise AnnulusError("mesh touches the z-axis")


# ---------------------------------------------------------------------------
# Continuation
# ---------------------------------------------------------------------------

@dataclass
class FamilySpec:
    """One-parameter boundary schedule; A, B (and optionally a, b) must be
    strictly monotone in t (either direction)."""

    t0: float
    t1: float
    A_of_t: callable = None
    B_of_t: callable = None
    a_of_t: callable = None
    b_of_t: callable = None
    dt_init: float = 0.1
    dt_min: float = 1e-4
    diagnostics: bool = False

    def rects(self, t: float, fallback: AnnulusProblem):
        a = self.a_of_t(t) if self.a_of_t else fallback.a
        b = self.b_of_t(t) if self.b_of_t else fallback.b
        A = self.A_of_t(t) if self.A_of_t else fallback.A
        B = self.B_of_t(t) if self.B_of_t else fallback.B
        return float(a), float(b), float(A), float(B)


@dataclass
class BranchResult:
    solutions: list
    status: str                 # "completed" | "gap" | "stuck"
    records: list               # dicts per accepted step
    t_reached: float


def _morph_to_rings(mesh: TriMesh, ring_shape: tuple, ring_in_new: np.ndarray,
                    ring_out_new: np.ndarray) -> TriMesh:
    """Move the boundary rings onto new target curves.

    The displacement decays away from each boundary (over a few rings) so the
    interior, in particular the neck, is left for Newton to adjust instead of
    being dragged along.
    """
    R, T = ring_shape
    ring_in_old = mesh.vertices[:T, :2]
    ring_out_old = mesh.vertices[-T:, :2]
    d_in = ring_in_new - ring_in_old
    d_out = ring_out_new - ring_out_old
    j = np.arange(R, dtype=float)
    w_in = np.exp(-j / 3.0)[:, None, None]
    w_out = np.exp(-(R - 1 - j) / 3.0)[:, None, None]
    disp = w_in * d_in[None] + w_out * d_out[None]
    verts = mesh.vertices.copy()
    verts[:, :2] += disp.reshape(-1, 2)
    verts[:T, :2] = ring_in_new
    verts[-T:, :2] = ring_out_new
    out = mesh.with_vertices(verts)
    out.on_plane_x0 = verts[:, 0] == 0.0
    out.on_plane_y0 = verts[:, 1] == 0.0
    return out


def _rect_rings(problem: AnnulusProblem):
    n = problem.n_quarter
    ri = _full_ring(_quarter_chain(problem.a, problem.b, n,
                                   problem.corner_index))
    ro = _full_ring(_quarter_chain(problem.A, problem.B, n,
                                   problem.corner_index))
    return ri, ro


def _weighted_resample(chain: np.ndarray, R: int, T: int,
                       radius_gamma: float = 0.35) -> np.ndarray:
    """Resample a radial chain at R points, spacing proportional to the local
    angular edge (2 pi r / T) so triangle aspect stays bounded at the neck."""
    seg = np.linalg.norm(np.diff(chain, axis=0), axis=1)
    if len(seg) == 0 or seg.min() < 0:
        return chain
    r = np.hypot(chain[:, 0], chain[:, 1])
    r_mid = np.maximum(0.5 * (r[:-1] + r[1:]), 1e-6)
    ang_edge = 2.0 * np.pi * r_mid / T
    w = seg * (1.0 + radius_gamma * np.median(ang_edge) / ang_edge)
    s_eff = np.concatenate([[0.0], np.cumsum(w)])
    s_plain = np.concatenate([[0.0], np.cumsum(seg)])
    sq = np.linspace(0.0, s_eff[-1], R)
    s_new = np.interp(sq, s_eff, s_plain)
    out = np.empty((R, chain.shape[1]))
    for c in range(chain.shape[1]):
        out[:, c] = np.interp(s_new, s_plain, chain[:, c])
    out[0] = chain[0]
    out[-1] = chain[-1]
    return out


def _redistribute_rings(mesh: TriMesh, ring_shape: tuple) -> TriMesh:
    """Slide the interior rings along their radial chains to the weighted
    arclength distribution.

    Pure reparametrization of the same polyline chains (boundary rings kept);
    keeps the neck resolved as continuation stretches the surface.
    """
    R, T = ring_shape
    V = mesh.vertices
    new = V.copy()
    for k in range(T):
        new[k::T] = _weighted_resample(V[k::T], R, T)
    return mesh.with_vertices(new)


def _gap_condition(rects) -> bool:
    a, b, A, B = rects
    return (B - b) >= np.pi and (A - a) >= np.pi


def _solve_at_t(spec: FamilySpec, t: float, base: AnnulusSolution
                ) -> AnnulusSolution:
    base = _maintain_mesh(base)
    rects_new = spec.rects(t, base.problem)
    problem = replace(base.problem, a=rects_new[0], b=rects_new[1],
                      A=rects_new[2], B=rects_new[3], init="warm",
                      warm_mesh=None, boundary_rings=None)
    mesh = _morph_to_rings(base.mesh, base.ring_shape, *_rect_rings(problem))
    problem.warm_mesh = mesh
    problem.settings = replace(base.problem.settings, flow_steps=0)
    sol = minimize_weighted_area(problem)
    sol.family_t = t
    return sol


def continue_family(spec: FamilySpec, seed: AnnulusSolution) -> BranchResult:
    """Warm-started continuation along the boundary schedule.

    On persistent failure near the end of the schedule the run terminates
    with status "gap" if the target geometry satisfies the strip-gap
    criterion (outer at distance >= pi), otherwise "stuck".
    """
    direction = 1.0 if spec.t1 >= spec.t0 else -1.0
    t = spec.t0 if seed.family_t is None else seed.family_t
    dt = spec.dt_init
    current = seed
    solutions = [seed]
    records = [_step_record(seed)]
    while direction * (spec.t1 - t) > 1e-12:
        t_next = t + direction * dt
        if direction * (t_next - spec.t1) > 0:
            t_next = spec.t1
        try:
            sol = _solve_at_t(spec, t_next, current)
            current = sol
            t = t_next
            solutions.append(sol)
            records.append(_step_record(sol))
            dt = min(dt * 1.6, spec.dt_init)
        except AnnulusError:
            dt *= 0.5
            if dt < spec.dt_min:
                status = "gap" if _gap_condition(
                    spec.rects(spec.t1, seed.problem)) else "stuck"
                return BranchResult(solutions, status, records, t)
    return BranchResult(solutions, "completed", records, t)


def _step_record(sol: AnnulusSolution) -> dict:
    return {"t": sol.family_t, "x_m": sol.x_m, "y_m": sol.y_m,
            "z_m": sol.z_m, "area_g": sol.area_g,
            "gradient_norm": sol.gradient_norm,
            "a": sol.problem.a, "b": sol.problem.b,
            "A": sol.problem.A, "B": sol.problem.B}


def steer_necksize(branch: list, x_target: float,
                   spec: FamilySpec | None = None,
                   rel_tol: float = 1e-3, max_bisect: int = 40
                   ) -> AnnulusSolution:
    """Bisect the family parameter between bracketing branch members until
    x(M) hits the target within rel_tol * x_target."""
    usable = [s for s in branch if s.family_t is not None]
    if not usable:
        raise AnnulusError("branch carries no family parameters")
    usable.sort(key=lambda s: s.family_t)
    for s in usable:
        if abs(s.x_m - x_target) <= rel_tol * x_target:
            return s
    lo = None
    for s1, s2 in zip(usable, usable[1:]):
        if (s1.x_m - x_target) * (s2.x_m - x_target) <= 0:
            lo, hi = s1, s2
            break
    if lo is None:
        xs = [s.x_m for s in usable]
        raise AnnulusError(
            f"no bracket: target {x_target} outside achieved range "
            f"[{min(xs):.4f}, {max(xs):.4f}]")
    if spec is None:
        raise AnnulusError("bisection requires the family spec")
    for _ in range(max_bisect):
        tm = 0.5 * (lo.family_t + hi.family_t)
        base = lo if abs(tm - lo.family_t) <= abs(tm - hi.family_t) else hi
        sol = _solve_at_t(spec, tm, base)
        if abs(sol.x_m - x_target) <= rel_tol * x_target:
            return sol
        if (lo.x_m - x_target) * (sol.x_m - x_target) <= 0:
            hi = sol
        else:
            lo = sol
    raise AnnulusError(
        f"bisection did not reach |x_m - {x_target}| < {rel_tol * x_target}")
