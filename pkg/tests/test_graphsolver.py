"""Dirichlet/ladder solver for the translator graph equation."""

import numpy as np
import pytest

from translab.graphsolver import (
    DirichletProblem,
    NewtonSettings,
    SolverError,
    barrier,
    delta_wing,
    fd_jacobian_coefficients,
    fd_residual,
    graph_residual,
    lipschitz_slope,
    solve_dirichlet,
)
from translab.grids import GraphGrid
from translab.reference import slope_s


def reaper_boundary(a, b_dom):
    f = lambda y: np.log(np.cos(y))
    return {
        "left": f, "right": f,
        "bottom": lambda x: np.full(len(np.atleast_1d(x)), np.log(np.cos(-b_dom))),
        "top": lambda x: np.full(len(np.atleast_1d(x)), np.log(np.cos(b_dom))),
    }


class TestDiscretization:
    def test_closed_form_residual_second_order(self):
        # the closed form is the sign-convention oracle for the whole stack
        errs = []
        for n in (33, 65, 129):
            x = np.linspace(-1.0, 1.0, n)
            y = np.linspace(-1.2, 1.2, n)
            u = np.tile(np.log(np.cos(y)), (n, 1))
            r = fd_residual(u, x[1] - x[0], y[1] - y[0])[1:-1, 1:-1]
            errs.append(np.abs(r).max())
        assert errs[0] / errs[1] > 3.5
        assert errs[1] / errs[2] > 3.5

    @pytest.mark.parametrize("sym", [(False, False), (True, False), (True, True)])
    def test_jacobian_matches_fd(self, sym):
        sym_x, sym_y = sym
        rng = np.random.default_rng(5)
        nx, ny = 9, 8
        hx, hy = 0.11, 0.13
        u = 0.3 * rng.standard_normal((nx, ny))
        coeffs = fd_jacobian_coefficients(u, hx, hy, sym_x, sym_y)
        eps = 1e-7
        for _ in range(40):
            i, j = rng.integers(1, nx - 1), rng.integers(1, ny - 1)
            ii, jj = rng.integers(0, nx), rng.integers(0, ny)
            di, dj = ii - i, jj - j
            up = u.copy()
            up[ii, jj] += eps
            um = u.copy()
            um[ii, jj] -= eps
            fd = (fd_residual(up, hx, hy, sym_x, sym_y)[i, j]
                  - fd_residual(um, hx, hy, sym_x, sym_y)[i, j]) / (2 * eps)
            got = coeffs.get((di, dj), np.zeros((nx, ny)))[i, j] if abs(di) <= 1 and abs(dj) <= 1 else 0.0
            assert fd == pytest.approx(got, abs=2e-6)


class TestSolveDirichlet:
    def test_manufactured_reaper_convergence(self):
        errors = {}
        for n in (33, 65):
            p = DirichletProblem((-2.0, 2.0), (-1.2, 1.2), nx=n, ny=n,
                                 boundary=reaper_boundary(2.0, 1.2))
            sol = solve_dirichlet(p)
            exact = np.tile(np.log(np.cos(sol.y)), (n, 1))
            errors[n] = np.abs(sol.u - exact)[1:-1, 1:-1].max()
        assert errors[33] / errors[65] > 3.5

    def test_zero_boundary_positive_and_symmetric(self):
        p = DirichletProblem((-4.0, 4.0), (-2.0, 2.0), nx=65, ny=33,
                             boundary={"left": 0.0, "right": 0.0,
                                       "bottom": 0.0, "top": 0.0})
        sol = solve_dirichlet(p)
        i0, j0 = 32, 16
        assert sol.u[i0, j0] > 0
        assert np.array_equal(sol.u, sol.u[::-1, :])
        assert np.array_equal(sol.u, sol.u[:, ::-1])
        assert np.abs(graph_residual(sol)).max() < 1e-10

    def test_nested_domain_monotonicity(self):
        zero = {"left": 0.0, "right": 0.0, "bottom": 0.0, "top": 0.0}
        small = solve_dirichlet(DirichletProblem((-3.0, 3.0), (-2.0, 2.0),
                                                 nx=49, ny=33, boundary=zero))
        big = solve_dirichlet(DirichletProblem((-4.0, 4.0), (-2.5, 2.5),
                                               nx=65, ny=41, boundary=zero))
        # compare on the smaller rectangle via interpolation
        xx, yy = np.meshgrid(small.x[1:-1], small.y[1:-1], indexing="ij")
        f_small = small.u[1:-1, 1:-1]
        f_big = big.interp(xx.ravel(), yy.ravel()).reshape(f_small.shape)
        assert np.all(f_small <= f_big + 1e-8)

    def test_newton_failure_reports_residual(self):
        p = DirichletProblem((-1.0, 1.0), (-1.0, 1.0), nx=17, ny=17,
                             boundary={"left": 0.0, "right": 0.0,
                                       "bottom": 0.0, "top": 0.0},
                             newton=NewtonSettings(tol=1e-10, max_iter=1))
        with pytest.raises(SolverError):
            solve_dirichlet(p)


class TestDeltaWing:
    @pytest.fixture(scope="class")
    def wing2(self):
        # rung 16 window: the truncation sweet band for wing-slope reads
        return delta_wing(2.0, window_half_length=8.0, tol=0.35,
                          a_ladder=(8, 12, 16), ny=129)

    def test_untilted_limit_matches_closed_form(self):
        tol = 2.5e-2
        w = delta_wing(np.pi / 2, window_half_length=3.0, tol=tol,
                       a_ladder=(8, 12, 16, 24, 32), ny=129)
        xx, yy = np.meshgrid(w.x, w.y, indexing="ij")
        inner = np.abs(w.y) <= 0.9 * np.pi / 2
        exact = np.log(np.cos(yy[:, inner]))
        assert np.abs(w.u[:, inner] - exact).max() < 10 * tol
        assert np.abs(w.u[:, inner] - exact).max() < 2.5e-2

    def test_centered_normalization(self, wing2):
        i0 = np.argmin(np.abs(wing2.x))
        j0 = np.argmin(np.abs(wing2.y))
        assert wing2.u[i0, j0] == 0.0
        dx = (wing2.u[i0 + 1, j0] - wing2.u[i0 - 1, j0]) / (2 * wing2.hx)
        dy = (wing2.u[i0, j0 + 1] - wing2.u[i0, j0 - 1]) / (2 * wing2.hy)
        assert abs(dx) < 1e-10 and abs(dy) < 1e-10

    def test_hessian_negative_definite(self, wing2):
        rng = np.random.default_rng(2)
        hx, hy = wing2.hx, wing2.hy
        for _ in range(5):
            i = rng.integers(5, len(wing2.x) - 5)
            j = rng.integers(5, len(wing2.y) - 5)
            uxx = (wing2.u[i + 1, j] - 2 * wing2.u[i, j] + wing2.u[i - 1, j]) / hx**2
            uyy = (wing2.u[i, j + 1] - 2 * wing2.u[i, j] + wing2.u[i, j - 1]) / hy**2
            uxy = (wing2.u[i + 1, j + 1] - wing2.u[i + 1, j - 1]
                   - wing2.u[i - 1, j + 1] + wing2.u[i - 1, j - 1]) / (4 * hx * hy)
            eigs = np.linalg.eigvalsh(np.array([[uxx, uxy], [uxy, uyy]]))
            assert np.all(eigs < 0)

    def test_wing_slopes_approach_ruling_slope(self, wing2):
        j0 = np.argmin(np.abs(wing2.y))
        s = slope_s(2.0)
        right = (wing2.u[-1, j0] - wing2.u[-2, j0]) / wing2.hx
        left = (wing2.u[1, j0] - wing2.u[0, j0]) / wing2.hx
        assert right == pytest.approx(-s, abs=0.05)
        assert left == pytest.approx(+s, abs=0.05)


class TestBarrier:
    @pytest.fixture(scope="class")
    def bar(self):
        return barrier(3.0, 1.0, tol=1e-6, nx=193, ny=65)

    def test_zero_edge(self, bar):
        assert np.abs(bar.u[0, :]).max() == 0.0

    def test_monotone_in_abs_y(self, bar):
        j0 = (len(bar.y) - 1) // 2
        upper = bar.u[:, j0:]
        assert np.all(np.diff(upper, axis=1) <= 1e-12)

    def test_below_midline(self, bar):
        j0 = (len(bar.y) - 1) // 2
        assert np.all(bar.u <= bar.u[:, j0][:, None] + 1e-12)

    def test_dirichlet_below_barrier_stays_below(self, bar):
        # comparison solution with boundary below the barrier
        p = DirichletProblem((0.0, 3.0), (-1.0, 1.0), nx=193, ny=65,
                             boundary={"left": 0.0, "right": 0.0,
                                       "bottom": 0.0, "top": 0.0})
        sol = solve_dirichlet(p)
        assert np.all(sol.u <= bar.u + 1e-10)


class TestLipschitzSlope:
    def test_finite_and_nonincreasing(self):
        s, converged, trace = lipschitz_slope(
            1.0, a_ladder=(1.5, 2.5, 3.5), tol=1e-3, nx_per_unit=48, ny=49)
        slopes = [t[1] for t in trace]
        assert np.isfinite(s)
        assert all(b <= a + 1e-6 for a, b in zip(slopes, slopes[1:]))
        assert s == pytest.approx(slopes[-1], abs=1e-9)


class TestSlopeComparison:
    def test_bounded_domain_slope_below_complete_graph_slope(self):
        # zero-boundary solution on [-4,4]x[-2.5,2.5] against the complete
        # graph over |y| < 2, along the midline, at interior columns x > 0
        wing = delta_wing(2.0, window_half_length=4.0, tol=6e-2,
                          a_ladder=(8, 12, 16), ny=129)
        p = DirichletProblem((-4.0, 4.0), (-2.5, 2.5), nx=129, ny=81,
                             boundary={"left": 0.0, "right": 0.0,
                                       "bottom": 0.0, "top": 0.0})
        sol = solve_dirichlet(p)
        j0 = (len(sol.y) - 1) // 2
        jw = np.argmin(np.abs(wing.y))
        dx_sol = (sol.u[2:, j0] - sol.u[:-2, j0]) / (2 * sol.hx)
        xs = sol.x[1:-1]
        sel = xs > 0
        dx_wing = np.array([
            (wing.interp(x + wing.hx, 0.0) - wing.interp(x - wing.hx, 0.0))
            / (2 * wing.hx) for x in xs[sel]])
        assert np.all(dx_sol[sel] < dx_wing + 1e-6)
