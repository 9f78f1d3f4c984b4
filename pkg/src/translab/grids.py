"""Structured-grid scalar fields u(x, y) on rectangles.

Carrier for graphical translators and barriers.  Capped-infinite boundary
edges store the cap value, never an actual infinity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import TriMesh, graph_mesh


@dataclass
class GraphGrid:
    x: np.ndarray          # (nx,)
    y: np.ndarray          # (ny,)
    u: np.ndarray          # (nx, ny)
    boundary_spec: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        if len(self.x) < 3 or len(self.y) < 3:
            raise ValueError("grids need nx, ny >= 3")
        if self.u.shape != (len(self.x), len(self.y)):
            raise ValueError("u shape does not match grid")
        if np.any(np.diff(self.x) <= 0) or np.any(np.diff(self.y) <= 0):
            raise ValueError("grid coordinates must be strictly increasing")
        if not np.all(np.isfinite(self.u[1:-1, 1:-1])):
            raise ValueError("non-finite interior value")

    @property
    def hx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def hy(self) -> float:
        return float(self.y[1] - self.y[0])

    def interp(self, xq, yq):
        """Bilinear interpolation of u at query points."""
        return self._bilinear(self.u, xq, yq)

    def grad(self, xq, yq):
        """(du/dx, du/dy) at query points: central differences on the grid,
        then bilinear interpolation of the derivative fields."""
        ux = np.gradient(self.u, self.x, axis=0)
        uy = np.gradient(self.u, self.y, axis=1)
        return self._bilinear(ux, xq, yq), self._bilinear(uy, xq, yq)

    def _bilinear(self, f, xq, yq):
        xq = np.asarray(xq, dtype=float)
        yq = np.asarray(yq, dtype=float)
        i = np.clip(np.searchsorted(self.x, xq) - 1, 0, len(self.x) - 2)
        j = np.clip(np.searchsorted(self.y, yq) - 1, 0, len(self.y) - 2)
        tx = (xq - self.x[i]) / (self.x[i + 1] - self.x[i])
        ty = (yq - self.y[j]) / (self.y[j + 1] - self.y[j])
        v = (f[i, j] * (1 - tx) * (1 - ty) + f[i + 1, j] * tx * (1 - ty)
             + f[i, j + 1] * (1 - tx) * ty + f[i + 1, j + 1] * tx * ty)
        return v if v.shape else float(v)

    def window(self, x_half: float, y_half: float | None = None) -> "GraphGrid":
        """Restriction to |x| <= x_half (and |y| <= y_half if given)."""
        ix = np.abs(self.x) <= x_half + 1e-12
        iy = (np.abs(self.y) <= y_half + 1e-12) if y_half is not None \
            else np.ones(len(self.y), dtype=bool)
        return GraphGrid(self.x[ix], self.y[iy], self.u[np.ix_(ix, iy)],
                         dict(self.boundary_spec))

    def to_csv(self, path) -> None:
        """CSV export, header x,y,u, row-major (x outer loop)."""
        with open(path, "w") as fh:
            fh.write("x,y,u\n")
            for i, xv in enumerate(self.x):
                for j, yv in enumerate(self.y):
                    fh.write(f"{xv:.17g},{yv:.17g},{self.u[i, j]:.17g}\n")

    def to_mesh(self) -> TriMesh:
        return graph_mesh(self.x, self.y, self.u)


def symmetric_axis(half_max: float, n_half: int) -> np.ndarray:
    """Grid on [-half_max, half_max] that is exactly symmetric in floating
    point: the negative side is the mirrored positive side."""
    pos = np.linspace(0.0, half_max, n_half + 1)
    return np.concatenate([-pos[::-1], pos[1:]])
