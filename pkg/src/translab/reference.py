"""Reference translators: grim reaper family, bowl, rotational annuli, catenoid.

These closed forms and ODE profiles serve as oracles and initializers for the
PDE and mesh solvers.  Sign conventions are pinned here once: a graph
z = u(x, y) translates downward-normalized iff

    div(Du / W) = -1 / W,      W = sqrt(1 + |Du|^2),

which the untilted profile log(cos y) satisfies identically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .mesh import TriMesh


class DomainError(ValueError):
    """Evaluation point outside the strip, or invalid parameter."""


def sigma(b: float) -> float:
    return 2.0 * b / np.pi


def slope_s(b: float) -> float:
    """Ruling slope of the width-2b tilted grim reaper; 0 at b = pi/2."""
    if b < np.pi / 2 - 1e-12:
        raise DomainError(f"strip half-width {b} below pi/2")
    return float(np.sqrt(max(sigma(b) ** 2 - 1.0, 0.0)))


@dataclass(frozen=True)
class GrimReaperSpec:
    """Tilted grim reaper over a strip of half-width b >= pi/2.

    tilt_sign +1 gives ruling slope +s(b) in the unbounded direction, -1 the
    mirror image.  orientation selects whether the strip is in y (default) or
    in x; center_offset shifts the strip center.
    """

    half_width: float = np.pi / 2
    tilt_sign: int = 1
    center_offset: float = 0.0
    orientation: str = "strip-in-y"

    def __post_init__(self):
        if self.half_width < np.pi / 2 - 1e-12:
            raise DomainError("half_width must be >= pi/2")
        if self.tilt_sign not in (1, -1):
            raise DomainError("tilt_sign must be +1 or -1")
        if self.orientation not in ("strip-in-y", "strip-in-x"):
            raise DomainError(f"unknown orientation {self.orientation!r}")


def eval_grim_reaper(spec: GrimReaperSpec, x, y):
    """Height of the tilted grim reaper at (x, y); strict strip interior only."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    across, along = (y, x) if spec.orientation == "strip-in-y" else (x, y)
    t = across - spec.center_offset
    if np.any(np.abs(t) >= spec.half_width):
        raise DomainError("point on or outside the strip boundary")
    sg = sigma(spec.half_width)
    z = sg * sg * np.log(np.cos(t / sg)) + spec.tilt_sign * slope_s(spec.half_width) * along
    return z if z.shape else float(z)


def grim_reaper_gradient(spec: GrimReaperSpec, x, y):
    """(du/dx, du/dy) of eval_grim_reaper."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    across = (y if spec.orientation == "strip-in-y" else x) - spec.center_offset
    if np.any(np.abs(across) >= spec.half_width):
        raise DomainError("point on or outside the strip boundary")
    sg = sigma(spec.half_width)
    d_across = -sg * np.tan(across / sg)
    d_along = spec.tilt_sign * slope_s(spec.half_width) * np.ones_like(across)
    if spec.orientation == "strip-in-y":
        return d_along, d_across
    return d_across, d_along


# ---------------------------------------------------------------------------
# Rotational profiles
# ---------------------------------------------------------------------------

@dataclass
class RotationalProfile:
    """Sampled profile of a rotationally invariant translator.

    samples columns are (r, z, dz/dr); arclength flag marks profiles computed
    past a vertical tangent.
    """

    kind: str
    samples: np.ndarray
    neck_radius: float | None = None
    arclength: bool = False
    extra: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("r,z,dzdr\n")
            for r, z, dzdr in self.samples:
                fh.write(f"{r:.17g},{z:.17g},{dzdr:.17g}\n")


class IntegrationError(Exception):
    pass


def bowl_profile(r_max: float, tol: float = 1e-10, method: str = "RK45") -> RotationalProfile:
    """Entire rotational translator graph u(r), u(0) = 0, u'(0) = 0.

    ODE: u'' = (1 + u'^2) (-1 - u'/r), removable singularity at the axis
    handled by the series u = -r^2/4 - r^4/128 + O(r^6) on [0, 1e-3].
    """
    if r_max <= 0:
        raise DomainError("r_max must be positive")
    r0 = min(1e-3, 0.1 * r_max)

    def rhs(r, y):
        u, up = y
        return [up, (1.0 + up * up) * (-1.0 - up / r)]

    y0 = [-r0 ** 2 / 4.0 - r0 ** 4 / 128.0, -r0 / 2.0 - r0 ** 3 / 32.0]
    sol = solve_ivp(rhs, (r0, r_max), y0, method=method, rtol=tol, atol=tol,
                    dense_output=True)
    if not sol.success:
        raise IntegrationError(f"bowl integration failed near r = {sol.t[-1]:.6g}")
    r = np.linspace(0.0, r_max, max(200, int(20 * r_max)))
    u = np.empty_like(r)
    up = np.empty_like(r)
    inner = r <= r0
    u[inner] = -r[inner] ** 2 / 4.0 - r[inner] ** 4 / 128.0
    up[inner] = -r[inner] / 2.0 - r[inner] ** 3 / 32.0
    vals = sol.sol(r[~inner])
    u[~inner], up[~inner] = vals[0], vals[1]
    return RotationalProfile("bowl", np.column_stack([r, u, up]))


def rotational_annulus_profile(R: float, span: float = 10.0, tol: float = 1e-10
                               ) -> RotationalProfile:
    """Rotationally invariant translating annulus with neck radius R.

    Shoots from the neck (vertical tangent at (R, 0)) in arclength to pass the
    turning point; one wing initially ascends, the mirror wing descends.
    Samples are ordered by z along the whole profile.
    """
    if R <= 0:
        raise DomainError("neck radius must be positive")

    def rhs(s, y):
        r, z, rp, zp = y
        lam = -(rp + zp / r)
        return [rp, zp, -zp * lam, rp * lam]

    wings = []
    for zdir in (1.0, -1.0):
        sol = solve_ivp(rhs, (0.0, span), [R, 0.0, 0.0, zdir], rtol=tol, atol=tol,
                        dense_output=True, max_step=span / 50.0)
        if not sol.success or sol.t[-1] < 0.99 * span:
            raise IntegrationError(
                f"neck shooting stalled at arclength {sol.t[-1]:.6g} (wing {zdir:+})"
            )
        s = np.linspace(0.0, span, max(400, int(80 * span)))
        r, z, rp, zp = sol.sol(s)
        with np.errstate(divide="ignore"):
            dzdr = np.where(np.abs(rp) > 1e-300, zp / rp, np.inf)
        wings.append(np.column_stack([r, z, dzdr]))
    lower, upper = wings[1][::-1], wings[0]
    samples = np.vstack([lower, upper[1:]])
    return RotationalProfile("annulus", samples, neck_radius=R, arclength=True)


def profile_pde_residual(samples: np.ndarray, slope_cap: float = 20.0) -> np.ndarray:
    """Graph-equation residual u''(1+u'^2)^-1 + u'/r + 1 from finite
    differences of sampled (r, z, dz/dr); independent of the integrator.

    Samples must come from a single wing (r monotone); near-vertical samples
    (|dz/dr| > slope_cap) are excluded since graph variables degenerate there.
    """
    r, _, up = samples.T
    keep = np.isfinite(up) & (np.abs(up) <= slope_cap)
    r, up = r[keep], up[keep]
    order = np.argsort(r)
    r, up = r[order], up[order]
    r, idx = np.unique(r, return_index=True)
    up = up[idx]
    upp = np.gradient(up, r)
    return upp / (1.0 + up ** 2) + up / np.where(r == 0, np.inf, r) + 1.0


def revolve_profile(samples: np.ndarray, n_theta: int = 64) -> TriMesh:
    """Surface of revolution about the z-axis from (r, z) profile samples."""
    rz = samples[:, :2]
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    ct, st = np.cos(theta), np.sin(theta)
    # exact zeros on the coordinate planes
    ct[np.isclose(np.abs(st), 1.0)] = 0.0
    st[np.isclose(np.abs(ct), 1.0)] = 0.0
    rings = len(rz)
    verts = np.empty((rings * n_theta, 3))
    for i, (r, z) in enumerate(rz):
        verts[i * n_theta:(i + 1) * n_theta, 0] = r * ct
        verts[i * n_theta:(i + 1) * n_theta, 1] = r * st
        verts[i * n_theta:(i + 1) * n_theta, 2] = z
    faces = []
    for i in range(rings - 1):
        for k in range(n_theta):
            a = i * n_theta + k
            b = i * n_theta + (k + 1) % n_theta
            c = (i + 1) * n_theta + k
            d = (i + 1) * n_theta + (k + 1) % n_theta
            faces.append((a, b, d))
            faces.append((a, d, c))
    mesh = TriMesh(verts, np.array(faces, dtype=np.int64))
    mesh.on_plane_x0 = verts[:, 0] == 0.0
    mesh.on_plane_y0 = verts[:, 1] == 0.0
    return mesh


def catenoid_reference(waist_radius: float = 1.0, n_z: int = 61, n_theta: int = 80
                       ) -> TriMesh:
    """Euclidean catenoid r = w cosh(z/w) meshed on |z| <= 2w.

    A comparison target only: it is minimal, not a translator.
    """
    if waist_radius <= 0:
        raise DomainError("waist_radius must be positive")
    w = waist_radius
    z = np.linspace(-2.0 * w, 2.0 * w, n_z)
    r = w * np.cosh(z / w)
    return revolve_profile(np.column_stack([r, z]), n_theta=n_theta)


def rotational_annulus_mesh(R: float, span: float = 3.0, n_theta: int = 96,
                            tol: float = 1e-10) -> TriMesh:
    """Translating-annulus surface of revolution, a genuine translator mesh."""
    prof = rotational_annulus_profile(R, span=span, tol=tol)
    step = max(1, len(prof.samples) // 120)
    return revolve_profile(prof.samples[::step], n_theta=n_theta)
