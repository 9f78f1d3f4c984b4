"""Measurements on computed annuli: neck size, wing profiles, widths,
cap classification, area growth, catenoid comparison, sideways graphicality.

All quantities here are Euclidean; only the solvers use the weighted metric.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .energy import face_areas
from .mesh import TriMesh, slice_mesh
from .reference import slope_s


class StructureError(Exception):
    """Slice structure differs from the expected two-wing shape."""


def neck_metrics(mesh: TriMesh):
    """(x_M, y_M, z_M): axis distances of the two symmetry slices and the
    height of the x-neck point."""
    polys = slice_mesh(mesh, "y", 0.0)
    pts = np.vstack([p for p in polys]) if polys else np.empty((0, 3))
    pts = pts[pts[:, 0] > 0]
    if len(pts) == 0:
        raise StructureError("mesh does not intersect {y=0, x>0}")
    k = int(np.argmin(pts[:, 0]))
    x_m = float(pts[k, 0])
    z_m = float(pts[k, 2])
    polys_x = slice_mesh(mesh, "x", 0.0)
    qts = np.vstack([p for p in polys_x]) if polys_x else np.empty((0, 3))
    qts = qts[qts[:, 1] > 0]
    y_m = float(qts[:, 1].min()) if len(qts) else float("nan")
    return x_m, y_m, z_m


def wing_profiles(mesh: TriMesh):
    """Split the {y=0, x>0} slice at its x-minimum into the two wing graphs.

    Returns ((x_lower, z_lower), (x_upper, z_upper)), both ordered by
    increasing x, meeting at (x_M, z_M).  Raises StructureError if the slice
    is not a single chain with the expected shape.
    """
    polys = [p for p in slice_mesh(mesh, "y", 0.0) if p[:, 0].max() > 0]
    polys = [p[p[:, 0] >= 0] for p in polys]
    polys = [p for p in polys if len(p) >= 2]
    if len(polys) != 1:
        raise StructureError(
            f"expected one {{y=0, x>0}} chain, found {len(polys)}")
    chain = polys[0]
    k = int(np.argmin(chain[:, 0]))
    if k in (0, len(chain) - 1):
        raise StructureError("neck point sits at a chain end")
    b1 = chain[k::-1]
    b2 = chain[k:]
    for br in (b1, b2):
        if np.any(np.diff(br[:, 0]) < -1e-9):
            raise StructureError("wing chain is not monotone in x")
    # the upper wing extends to the outer rectangle, i.e. to larger x
    if b1[-1, 0] >= b2[-1, 0]:
        upper, lower = b1, b2
    else:
        upper, lower = b2, b1
    x_mid = min(upper[-1, 0], lower[-1, 0])
    sel_u = upper[:, 0] <= x_mid
    zl = np.interp(upper[sel_u, 0][1:-1], lower[:, 0], lower[:, 2])
    if np.any(upper[sel_u, 2][1:-1] <= zl - 1e-9):
        raise StructureError("wing ordering violated: upper below lower")
    if np.any(np.diff(lower[:, 2]) > 1e-9):
        raise StructureError("lower wing is not decreasing")
    return (lower[:, 0], lower[:, 2]), (upper[:, 0], upper[:, 2])


def _column_crossings(mesh: TriMesh, x: float, z: float):
    """Positive-y crossings of the column slice {x=x} with height z."""
    ys = []
    for poly in slice_mesh(mesh, "x", x):
        p = poly
        for i in range(len(p) - 1):
            z0, z1 = p[i, 2], p[i + 1, 2]
            if (z0 - z) * (z1 - z) < 0:
                t = (z - z0) / (z1 - z0)
                y = (1 - t) * p[i, 1] + t * p[i + 1, 1]
                if y > 0:
                    ys.append(float(y))
            elif z0 == z and p[i, 1] > 0:
                ys.append(float(p[i, 1]))
    return sorted(ys)


@dataclass
class WidthEstimate:
    b_m: float
    B_m: float
    b_spread: float
    B_spread: float
    samples: list = field(default_factory=list)   # rows (x, z, y_inner, y_outer)
    depth_band: float = 0.0


def width_estimates(mesh: TriMesh, depth_band: float = 4.0, n_x: int = 6,
                    n_z: int = 8) -> WidthEstimate:
    """Inner/outer sheet positions from {x = const} slices below the lower
    wing; medians over the deepest quartile with the spread as error bar."""
    x_m, _, _ = neck_metrics(mesh)
    (xl, zl), _ = wing_profiles(mesh)
    x_hi = xl[-1]
    x_lo = x_m + np.pi
    if x_hi - 0.5 <= x_lo:
        x_lo = x_m + 0.25 * (x_hi - x_m)
    xs = np.linspace(x_lo, x_hi - 0.25 * (x_hi - x_lo), n_x)
    rows = []
    z_floor = mesh.vertices[:, 2].min()
    for x in xs:
        phi = np.interp(x, xl, zl)
        lo = max(phi - depth_band, z_floor + 0.05 * (phi - z_floor))
        if lo >= phi - 1e-9:
            continue
        for z in np.linspace(lo, phi - 0.1 * (phi - lo), n_z):
            ys = _column_crossings(mesh, float(x), float(z))
            if len(ys) >= 2:
                rows.append((float(x), float(z), ys[0], ys[-1]))
    if not rows:
        raise StructureError("insufficient depth below the lower wing")
    arr = np.array(rows)
    deep = arr[arr[:, 1] <= np.quantile(arr[:, 1], 0.25)]
    b_m = float(np.median(deep[:, 2]))
    B_m = float(np.median(deep[:, 3]))
    return WidthEstimate(
        b_m=b_m, B_m=B_m,
        b_spread=float(np.ptp(deep[:, 2])),
        B_spread=float(np.ptp(deep[:, 3])),
        samples=[tuple(r) for r in rows],
        depth_band=depth_band)


def classify_cap(mesh: TriMesh, b_m: float, B_m: float) -> str:
    """'capped' | 'uncapped' | 'indeterminate' from the upper wing shape."""
    if B_m <= np.pi / 2 + 0.01:
        return "indeterminate"
    _, (xu, zu) = wing_profiles(mesh)
    x_m, _, _ = neck_metrics(mesh)
    sel = xu >= x_m + 0.5
    if sel.sum() < 5:
        return "indeterminate"
    x, z = xu[sel], zu[sel]
    k = max(3, len(x) // 20)
    slopes = (z[k:] - z[:-k]) / (x[k:] - x[:-k])
    deep = slopes[-max(3, len(slopes) // 4):]
    deep_slope = float(np.median(deep))
    if abs(deep_slope) < 0.2 * slope_s(max(B_m, np.pi / 2)):
        return "indeterminate"
    if deep_slope < 0:
        # interior maximum: slope started positive at the neck end
        return "capped" if slopes.max() > 0 else "capped"
    if np.all(slopes > 0):
        return "uncapped"
    return "uncapped" if deep_slope > 0 else "indeterminate"


def psi_profile(mesh: TriMesh, xs: np.ndarray) -> np.ndarray:
    """Max height over the column slices {x = t}."""
    out = np.full(len(xs), np.nan)
    for i, x in enumerate(xs):
        polys = slice_mesh(mesh, "x", float(x))
        if polys:
            out[i] = max(p[:, 2].max() for p in polys)
    return out


def lipschitz_check(mesh: TriMesh, s_b: float, n: int = 20,
                    mesh_tol: float | None = None):
    """psi(x0+h) <= psi(x0) + s_b |h| + 2 tol over an (x0, h) grid.

    Returns (ok, worst_margin, table).  Margin > 0 means satisfied.
    """
    if mesh_tol is None:
        e = mesh.vertices[mesh.faces[:, 0]] - mesh.vertices[mesh.faces[:, 1]]
        mesh_tol = float(np.median(np.linalg.norm(e, axis=1)) ** 2)
    x_min = mesh.vertices[:, 0].min()
    x_max = mesh.vertices[:, 0].max()
    xs = np.linspace(x_min + 0.02 * (x_max - x_min),
                     x_max - 0.02 * (x_max - x_min), n)
    psi = psi_profile(mesh, xs)
    worst = np.inf
    finite = np.isfinite(psi)
    for i in np.flatnonzero(finite):
        for j in np.flatnonzero(finite):
            if i == j:
                continue
            h = xs[j] - xs[i]
            margin = psi[i] + s_b * abs(h) + 2 * mesh_tol - psi[j]
            worst = min(worst, float(margin))
    return worst >= 0.0, worst, {"s_b": s_b, "mesh_tol": mesh_tol}


def area_growth_fit(mesh: TriMesh, n_centers: int = 20, seed: int = 0,
                    centers=None):
    """Euclidean area(M ∩ ball(p, r)) / r^2 over a decade of radii.

    Returns (c1, max_loglog_slope, table); c1 is the max observed ratio.
    """
    rng = np.random.default_rng(seed)
    V, F = mesh.vertices, mesh.faces
    areas = face_areas(mesh)
    diam = np.linalg.norm(np.ptp(V, axis=0))
    r_hi = diam / 3.0
    radii = r_hi * np.logspace(-1.0, 0.0, 6)
    if centers is None:
        vids = rng.choice(mesh.n_vertices, size=min(n_centers, mesh.n_vertices),
                          replace=False)
    else:
        vids = np.asarray(centers, dtype=int)
    # 4x subdivided face sampling for ball clipping
    sub_pts = []
    sub_w = []
    bary = [(2 / 3, 1 / 6, 1 / 6), (1 / 6, 2 / 3, 1 / 6), (1 / 6, 1 / 6, 2 / 3),
            (1 / 3, 1 / 3, 1 / 3)]
    for lam in bary:
        sub_pts.append(lam[0] * V[F[:, 0]] + lam[1] * V[F[:, 1]] + lam[2] * V[F[:, 2]])
        sub_w.append(areas / 4.0)
    sub_pts = np.stack(sub_pts)            # (4, m, 3)
    sub_w = np.stack(sub_w)                # (4, m)
    table = []
    c1 = 0.0
    max_slope = -np.inf
    for vid in vids:
        p = V[vid]
        d2 = np.sum((sub_pts - p) ** 2, axis=2)
        a_of_r = []
        for r in radii:
            a = float(np.sum(sub_w[d2 <= r * r]))
            a_of_r.append(a)
        a_of_r = np.array(a_of_r)
        pos = a_of_r > 0
        if pos.sum() >= 3:
            slope = np.polyfit(np.log(radii[pos]), np.log(a_of_r[pos]), 1)[0]
            max_slope = max(max_slope, float(slope))
        ratios = a_of_r / radii ** 2
        c1 = max(c1, float(ratios.max()))
        table.append({"center": [float(c) for c in p],
                      "radii": list(map(float, radii)),
                      "areas": list(map(float, a_of_r))})
    return c1, max_slope, table


def _distance_to_catenoid(pts: np.ndarray) -> np.ndarray:
    """Distance from points to the unit-waist catenoid r = cosh(z)."""
    rho = np.hypot(pts[:, 0], pts[:, 1])
    z = pts[:, 2]
    zg = np.linspace(-2.5, 2.5, 801)
    rg = np.cosh(zg)
    d2 = (rho[:, None] - rg[None, :]) ** 2 + (z[:, None] - zg[None, :]) ** 2
    return np.sqrt(d2.min(axis=1))


def _distance_to_mesh(pts: np.ndarray, mesh: TriMesh) -> np.ndarray:
    """Point-to-surface distance via nearest faces (exact point-triangle)."""
    V, F = mesh.vertices, mesh.faces
    centroids = V[F].mean(axis=1)
    tree = cKDTree(centroids)
    _, cand = tree.query(pts, k=min(8, len(F)))
    cand = np.atleast_2d(cand)
    out = np.empty(len(pts))
    tri = V[F]
    for i, p in enumerate(pts):
        out[i] = min(_point_triangle_distance(p, tri[c]) for c in cand[i])
    return out


def _point_triangle_distance(p, tri):
    a, b, c = tri
    ab, ac, ap = b - a, c - a, p - a
    d1, d2 = ab @ ap, ac @ ap
    if d1 <= 0 and d2 <= 0:
        return float(np.linalg.norm(ap))
    bp = p - b
    d3, d4 = ab @ bp, ac @ bp
    if d3 >= 0 and d4 <= d3:
        return float(np.linalg.norm(bp))
    vc = d1 * d4 - d3 * d2
    if vc <= 0 and d1 >= 0 and d3 <= 0:
        v = d1 / (d1 - d3)
        return float(np.linalg.norm(ap - v * ab))
    cp = p - c
    d5, d6 = ab @ cp, ac @ cp
    if d6 >= 0 and d5 <= d6:
        return float(np.linalg.norm(cp))
    vb = d5 * d2 - d1 * d6
    if vb <= 0 and d2 >= 0 and d6 <= 0:
        w = d2 / (d2 - d6)
        return float(np.linalg.norm(ap - w * ac))
    va = d3 * d6 - d5 * d4
    if va <= 0 and (d4 - d3) >= 0 and (d5 - d6) >= 0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return float(np.linalg.norm(p - (b + w * (c - b))))
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return float(np.linalg.norm(p - (a + v * ab + w * ac)))


def neck_catenoid_deviation(mesh: TriMesh, ball_radius: float = 3.0) -> float:
    """Symmetric mean distance between the 1/x_M-rescaled neck region and the
    unit-waist catenoid, normalized by the unit waist."""
    x_m, _, z_m = neck_metrics(mesh)
    scaled = (mesh.vertices - np.array([0.0, 0.0, z_m])) / x_m
    inside = np.linalg.norm(scaled, axis=1) <= ball_radius
    if not inside.any():
        raise StructureError("no mesh vertices in the rescaled neck ball")
    d_mesh = _distance_to_catenoid(scaled[inside]).mean()

    zg = np.linspace(-1.7, 1.7, 40)
    rg = np.cosh(zg)
    keep = np.hypot(rg, zg) <= ball_radius
    th = np.linspace(0, 2 * np.pi, 48, endpoint=False)
    cat_pts = np.concatenate([
        np.column_stack([r * np.cos(th), r * np.sin(th), np.full_like(th, z)])
        for r, z in zip(rg[keep], zg[keep])])
    scaled_mesh = TriMesh(scaled, mesh.faces)
    d_cat = _distance_to_mesh(cat_pts, scaled_mesh).mean()
    return 0.5 * float(d_mesh + d_cat)


def sideways_graph_check(mesh: TriMesh, n_rays: int = 10000, seed: int = 0
                         ) -> bool:
    """True iff every sampled line parallel to the x-axis meets mesh ∩ {x>0}
    at most once (ray casting)."""
    rng = np.random.default_rng(seed)
    V, F = mesh.vertices, mesh.faces
    keep = (V[F, 0] > 0).any(axis=1)
    tri = V[F[keep]]
    if len(tri) == 0:
        return True
    lo = tri[:, :, 1:].min(axis=(0, 1))
    hi = tri[:, :, 1:].max(axis=(0, 1))
    ys = rng.uniform(lo[0], hi[0], n_rays)
    zs = rng.uniform(lo[1], hi[1], n_rays)
    # bucket faces on a (y, z) grid
    ng = 48
    fy0 = np.clip(((tri[:, :, 1].min(axis=1) - lo[0]) / (hi[0] - lo[0]) * ng).astype(int), 0, ng - 1)
    fy1 = np.clip(((tri[:, :, 1].max(axis=1) - lo[0]) / (hi[0] - lo[0]) * ng).astype(int), 0, ng - 1)
    fz0 = np.clip(((tri[:, :, 2].min(axis=1) - lo[1]) / (hi[1] - lo[1]) * ng).astype(int), 0, ng - 1)
    fz1 = np.clip(((tri[:, :, 2].max(axis=1) - lo[1]) / (hi[1] - lo[1]) * ng).astype(int), 0, ng - 1)
    buckets = [[[] for _ in range(ng)] for _ in range(ng)]
    for fid in range(len(tri)):
        for gy in range(fy0[fid], fy1[fid] + 1):
            for gz in range(fz0[fid], fz1[fid] + 1):
                buckets[gy][gz].append(fid)
    b, c_, a = tri[:, 1], tri[:, 2], tri[:, 0]
    for y, z in zip(ys, zs):
        gy = min(int((y - lo[0]) / (hi[0] - lo[0]) * ng), ng - 1)
        gz = min(int((z - lo[1]) / (hi[1] - lo[1]) * ng), ng - 1)
        cand = buckets[gy][gz]
        if not cand:
            continue
        hits = 0
        last_x = None
        for fid in cand:
            x = _ray_x_hit(tri[fid], y, z)
            if x is not None and x > 0:
                if last_x is not None and abs(x - last_x) < 1e-9:
                    continue
                hits += 1
                last_x = x
                if hits > 1:
                    return False
    return True


def _ray_x_hit(tri, y, z):
    """x-coordinate where the line {(t, y, z)} crosses the triangle, or None."""
    p0, p1, p2 = tri
    m = np.array([[p1[1] - p0[1], p2[1] - p0[1]],
                  [p1[2] - p0[2], p2[2] - p0[2]]])
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if abs(det) < 1e-14:
        return None
    r0, r1 = y - p0[1], z - p0[2]
    u = (r0 * m[1, 1] - r1 * m[0, 1]) / det
    v = (m[0, 0] * r1 - m[1, 0] * r0) / det
    if u < 0 or v < 0 or u + v > 1:
        return None
    return float(p0[0] + u * (p1[0] - p0[0]) + v * (p2[0] - p0[0]))


# ---------------------------------------------------------------------------
# Report assembly
# ---------------------------------------------------------------------------

@dataclass
class DiagnosticsReport:
    x_m: float
    y_m: float
    z_m: float
    b_m: float = float("nan")
    B_m: float = float("nan")
    b_spread: float = float("nan")
    B_spread: float = float("nan")
    depth_band: float = float("nan")
    cap_class: str = "indeterminate"
    wing_lower: list = field(default_factory=list)
    wing_upper: list = field(default_factory=list)
    lower_slope_deep: float = float("nan")
    upper_slope_deep: float = float("nan")
    area_growth_c1: float = float("nan")
    area_growth_slope: float = float("nan")
    neck_catenoid_dev: float = float("nan")
    sideways_graph: bool | None = None
    invariants: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def record(self, name: str, passed: bool, margin: float):
        self.invariants.append(
            {"name": name, "passed": bool(passed), "margin": float(margin)})

    def passed_all(self, paper_only: bool = False) -> bool:
        return all(e["passed"] for e in self.invariants)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        return json.loads(json.dumps(d, default=_jsonable))

    def profiles_to_csv(self, path) -> None:
        """CSV 'x,phi_lower,phi_upper' on the lower wing's x-samples."""
        xl = np.array([p[0] for p in self.wing_lower])
        zl = np.array([p[1] for p in self.wing_lower])
        xu = np.array([p[0] for p in self.wing_upper])
        zu = np.array([p[1] for p in self.wing_upper])
        with open(path, "w") as fh:
            fh.write("x,phi_lower,phi_upper\n")
            for x, z in zip(xl, zl):
                up = np.interp(x, xu, zu)
                fh.write(f"{x:.17g},{z:.17g},{up:.17g}\n")


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.bool_,)):
        return bool(o)
    raise TypeError(f"not jsonable: {type(o)}")


def _deep_slope(x: np.ndarray, z: np.ndarray) -> float:
    """Median slope over the deepest quarter of the wing samples."""
    if len(x) < 6:
        return float("nan")
    k = max(3, len(x) // 10)
    slopes = (z[k:] - z[:-k]) / (x[k:] - x[:-k])
    return float(np.median(slopes[-max(3, len(slopes) // 4):]))


def run_diagnostics(mesh: TriMesh, depth_band: float = 4.0,
                    s_b: float | None = None, with_area_growth: bool = True,
                    with_catenoid: bool = True,
                    with_sideways: bool = True) -> DiagnosticsReport:
    """Measure the named quantities and run the inequality ledger."""
    x_m, y_m, z_m = neck_metrics(mesh)
    rep = DiagnosticsReport(x_m=x_m, y_m=y_m, z_m=z_m)
    rep.record("x_m positive", x_m > 0, x_m)

    try:
        (xl, zl), (xu, zu) = wing_profiles(mesh)
        step = max(1, len(xl) // 200)
        rep.wing_lower = [(float(a), float(b)) for a, b in zip(xl[::step], zl[::step])]
        step = max(1, len(xu) // 200)
        rep.wing_upper = [(float(a), float(b)) for a, b in zip(xu[::step], zu[::step])]
        rep.lower_slope_deep = _deep_slope(xl, zl)
        rep.upper_slope_deep = _deep_slope(xu, zu)
        mono = np.diff(zl)
        rep.record("phi_lower strictly decreasing",
                   bool(np.all(mono <= 1e-9)), float(-mono.max()))
    except StructureError as err:
        rep.notes.append(f"wing structure: {err}")
        return rep

    try:
        w = width_estimates(mesh, depth_band=depth_band)
        rep.b_m, rep.B_m = w.b_m, w.B_m
        rep.b_spread, rep.B_spread = w.b_spread, w.B_spread
        rep.depth_band = w.depth_band
        rep.record("widths ordered", 0 < w.b_m <= w.B_m + 1e-12, w.B_m - w.b_m)
        arr = np.array(w.samples)
        alex = (w.b_m + w.B_m + 0.02) - (arr[:, 2] + arr[:, 3])
        rep.record("inner+outer within b+B", bool(np.all(alex >= 0)),
                   float(alex.min()))
        # y_inner nonincreasing in x at fixed z (binned by z)
        ok_mono, margin = True, np.inf
        for z0 in np.unique(np.round(arr[:, 1], 6)):
            rows = arr[np.round(arr[:, 1], 6) == z0]
            if len(rows) >= 2:
                rows = rows[np.argsort(rows[:, 0])]
                d = np.diff(rows[:, 2])
                margin = min(margin, float(-d.max()))
                if np.any(d > 5e-3):
                    ok_mono = False
        rep.record("y_inner nonincreasing in x", ok_mono,
                   margin if np.isfinite(margin) else 0.0)
        rep.cap_class = classify_cap(mesh, w.b_m, w.B_m)
    except StructureError as err:
        rep.notes.append(f"width estimates: {err}")

    if s_b is not None:
        ok, worst, info = lipschitz_check(mesh, s_b)
        rep.record("psi Lipschitz bound", ok, worst)
        rep.notes.append(f"lipschitz: {info}")

    if with_area_growth:
        c1, slope, _ = area_growth_fit(mesh)
        rep.area_growth_c1 = c1
        rep.area_growth_slope = slope
        # a thin neck makes the local decade slope exceed 2 legitimately
        # (tube area grows ~linearly before the wings enter the ball), so the
        # ledger only requires the quadratic-bound constant to be finite
        rep.record("area growth ratio finite", np.isfinite(c1) and c1 > 0, c1)

    if with_catenoid:
        try:
            rep.neck_catenoid_dev = neck_catenoid_deviation(mesh)
        except StructureError as err:
            rep.notes.append(f"catenoid: {err}")

    if with_sideways:
        rep.sideways_graph = sideways_graph_check(mesh)

    if x_m < 0.25 and np.isfinite(y_m):
        ratio = y_m / x_m
        rep.record("small-neck y/x ratio", 0.9 <= ratio <= 1.1,
                   min(ratio - 0.9, 1.1 - ratio))
    return rep
