import math

import numpy as np
import pytest

from ksm_stab import sigma as sg
from ksm_stab.convex import grid_from_values, support_grid
from ksm_stab.functionals import Functionals, normalize_field
from ksm_stab.ksm import h_stats
from ksm_stab.ma_solver import (
    UnstableInputError,
    alexandrov_measure,
    build_subsolution,
    initial_grid,
    minimize_ding,
    ode_residual_1d,
)

from conftest import product_oracle_dual_values


@pytest.fixture(scope="module")
def product_solution(product_fn):
    return minimize_ding(product_fn)


@pytest.fixture(scope="module")
def z1_solution(z1_soliton_fn):
    return minimize_ding(z1_soliton_fn)


class TestProductOracle:
    def test_ding_minimum(self, product_solution):
        assert product_solution.ding_value == pytest.approx(-1.0, abs=1e-3)
        assert product_solution.converged

    def test_potential_matches_analytic(self, product_solution):
        ys = np.linspace(-6, 6, 1201).reshape(-1, 1)
        exact = 2 * np.log(np.cosh(ys[:, 0] / 2)) + np.log(2)
        got = product_solution.u.primal_value(ys)
        assert float(np.max(np.abs(got - exact))) <= 1e-2

    def test_normalization_identity(self, product_solution, product_fn):
        res = product_solution.u.exp_integral(full=True)
        assert res["total"] == pytest.approx(product_fn.gstats.volume_g, rel=1e-10)

    def test_oracle_cell_masses_match_weights(self, product_fn):
        # substitution check: on the analytic solution the exp(-u) mass of
        # every subgradient cell matches its g hat mass (the weak equation)
        u = grid_from_values(
            product_fn.dual, lambda zs: product_oracle_dual_values(zs[:, 0])
        )
        res = u.exp_integral(full=True)
        mhat = res["masses"] / np.sum(res["masses"])
        wg = product_fn.hat_weights(u.geom, "g")
        what = wg / np.sum(wg)
        assert float(np.max(np.abs(mhat - what))) <= 1e-3

    def test_alexandrov_tracks_density(self, product_solution, product_fn):
        # Kolmogorov distance between the Alexandrov measure and the exp(-u)
        # distribution; bounds every per-cell mismatch by twice its value
        from scipy.integrate import cumulative_trapezoid

        am = alexandrov_measure(product_solution.u, product_fn)
        assert am.total == pytest.approx(1.0, abs=1e-6)
        ys = am.points[:, 0]
        h = ys[1] - ys[0]
        res = product_solution.u.exp_integral(full=True)
        grid = np.linspace(ys[0], ys[-1] + h, 200001)
        uv = product_solution.u.primal_value(grid.reshape(-1, 1))
        F_dens = cumulative_trapezoid(np.exp(-uv), grid, initial=0.0) + np.exp(-uv[0])
        F_want = np.interp(ys + h / 2, grid, F_dens) / res["total"]
        ks = float(np.max(np.abs(np.cumsum(am.masses) - F_want)))
        assert ks <= 2e-3

    def test_descent_from_reference(self, product_fn, product_solution):
        D_init = product_fn.ding(initial_grid(product_fn))
        assert product_solution.ding_value <= D_init + 1e-12


class TestOdeResidual:
    def test_oracle_satisfies_equation(self, product_fn):
        g = grid_from_values(
            product_fn.dual, lambda zs: product_oracle_dual_values(zs[:, 0])
        )
        assert ode_residual_1d(g, product_fn) <= 1e-3

    def test_reference_potential_is_not_solution(self, product_fn):
        assert ode_residual_1d(initial_grid(product_fn), product_fn) > 0.5

    def test_refinement_monotone(self, product_fn):
        vals = []
        for level in (8, 9, 10):
            g = grid_from_values(
                product_fn.dual,
                lambda zs: product_oracle_dual_values(zs[:, 0]),
                level=level,
            )
            vals.append(ode_residual_1d(g, product_fn))
        assert vals[1] <= vals[0] * 1.1
        assert vals[2] <= vals[1] * 1.1


class TestSolitonPipeline:
    def test_z1(self, z1_solution, z1_soliton_fn):
        assert z1_solution.converged
        assert z1_solution.residual_tv <= 1e-4
        assert z1_solution.mode == "uniform"
        res = z1_solution.u.exp_integral(full=True)
        assert res["total"] == pytest.approx(z1_soliton_fn.gstats.volume_g, rel=1e-8)

    def test_z2(self, z2_soliton_fn):
        sol = minimize_ding(z2_soliton_fn)
        assert sol.converged and sol.residual_tv <= 1e-4

    def test_pushforward_barycenter_vanishes(self, z1_solution):
        res = z1_solution.u.exp_integral(full=True)
        m = res["masses"] / np.sum(res["masses"])
        bg = float(m @ z1_solution.u.nodes[:, 0])
        assert abs(bg) <= 1e-4

    def test_coverage(self, z1_solution):
        assert z1_solution.gradient_image_coverage == pytest.approx(1.0, abs=1e-6)

    def test_unstable_refused(self, unstable_z1_fn):
        with pytest.raises(UnstableInputError) as err:
            minimize_ding(unstable_z1_fn)
        assert err.value.verdict.status == "unstable"


class TestNonUniform:
    def test_weak_solution(self, z2_tau0):
        _, fn = z2_tau0
        sol = minimize_ding(fn)
        assert sol.mode == "non_uniform"
        assert sol.residual_tv <= 1e-3
        reg = sol.regularity
        assert reg["zero_set_vertices"] == [[1.0]]
        assert reg["zero_set_dim"] == 0
        assert reg["dim_criterion_ok"]  # 0 <= l/2 = 1/2
        assert "smooth" in reg["note"]
        assert all(np.isfinite(v) for v in reg["holder_moduli"].values())

    def test_mass_identity_weak(self, z2_tau0):
        _, fn = z2_tau0
        sol = minimize_ding(fn)
        res = sol.u.exp_integral(full=True)
        assert res["total"] == pytest.approx(fn.gstats.volume_g, rel=1e-4)


class TestAlexandrov:
    def test_support_function_point_mass(self, product_fn):
        am = alexandrov_measure(support_grid(product_fn.dual), product_fn)
        i = int(np.argmax(am.masses))
        assert am.points[i, 0] == pytest.approx(0.0, abs=1e-12)
        assert am.masses[i] == pytest.approx(1.0, abs=1e-9)
        assert am.total == pytest.approx(1.0, abs=1e-6)

    def test_total_mass_one_random(self, z1_soliton_fn):
        rng = np.random.default_rng(9)
        for _ in range(5):

            def vals(zs):
                sl = rng.uniform(-1.5, 1.5, size=(4, 1))
                off = rng.uniform(-1, 1, size=4)
                return np.max(zs @ sl.T + off, axis=1)

            u = grid_from_values(z1_soliton_fn.dual, vals)
            am = alexandrov_measure(u, z1_soliton_fn)
            assert am.total == pytest.approx(1.0, abs=1e-6)

    def test_2d_facet_measure(self, p2_fiber):
        fld = normalize_field([0, 0], h_stats(p2_fiber), p2_fiber.dual())
        fn = Functionals(p2_fiber, sg.constant(0.0), fld)
        u = support_grid(p2_fiber.dual(), level=4)
        am = alexandrov_measure(u, fn)
        assert am.total == pytest.approx(1.0, abs=1e-6)
        assert np.all(am.masses >= 0)

    def test_nonconvex_rejected(self, product_fn):
        g = support_grid(product_fn.dual)
        bad = g.with_values(np.cos(9 * g.nodes[:, 0]))
        with pytest.raises(ValueError):
            alexandrov_measure(bad, product_fn)


class TestSubsolution:
    def test_nonuniform_constant_window_stable(self, z2_tau0):
        _, fn = z2_tau0
        _, C12, rep12 = build_subsolution(fn, window=12.0)
        _, C18, rep18 = build_subsolution(fn, window=18.0)
        assert rep12["mode"] == "non_uniform"
        assert 0 < C12 < 10
        assert C18 == pytest.approx(C12, rel=1e-3)  # C does not grow with the window

    def test_zero_weight_exponent_reported(self, z2_tau0):
        _, fn = z2_tau0
        _, _, rep = build_subsolution(fn)
        assert [1.0] in rep["zero_weight_exponents"]  # the vanishing-face vertex
        assert rep["n_exponents"] >= 5  # half-lattice, not just vertices

    def test_uniform_case(self, z1_soliton_fn):
        u_sub, C, rep = build_subsolution(z1_soliton_fn)
        # C is comparable to 1/A in the uniform regime
        assert C <= 10.0 / z1_soliton_fn.gstats.A
        assert u_sub.is_grid_convex()

    def test_growth_unavailable_refused(self, z2):
        # a profile with f vanishing quadratically at alpha fails the growth
        # bound and the construction must refuse
        def impl(t):
            w = t + 1.0
            return -2 * np.log(w), -2.0 / w, 2.0 / w**2

        prof = sg.SigmaProfile(
            "custom", -1.0, math.inf, {}, impl, boundary_exponent=2.0
        )
        from fractions import Fraction

        fld = normalize_field([Fraction(31, 19)], h_stats(z2), z2.dual())
        fn = Functionals.__new__(Functionals)
        fn.data, fn.profile, fn.field = z2, prof, fld
        fn.dual = z2.dual()
        with pytest.raises(ValueError, match="growth"):
            build_subsolution(fn)


class Test2DSolve:
    def test_p2_fiber_coarse(self, p2_fiber):
        fld = normalize_field([0, 0], h_stats(p2_fiber), p2_fiber.dual())
        fn = Functionals(p2_fiber, sg.constant(0.0), fld)
        sol = minimize_ding(fn, level=4, tol_tv=2e-3, max_iter=2000)
        assert sol.residual_tv <= 2e-3
        res = sol.u.exp_integral(full=True)
        assert res["total"] == pytest.approx(fn.gstats.volume_g, rel=1e-2)


class TestIndependentODEOracle:
    def test_z1_solution_tracks_ivp(self, z1_soliton_fn, z1_solution):
        # integrate u'' = e^{-u} / g(u') outward from the solver's own minimum
        # with an independent integrator; the trajectory must track the solved
        # potential and the slopes must saturate at the dual vertices +-1
        from scipy.integrate import solve_ivp

        from ksm_stab.functionals import g_values

        fn = z1_soliton_fn
        sol = z1_solution
        ys = np.linspace(-3, 3, 2401).reshape(-1, 1)
        uv = sol.u.primal_value(ys)
        i0 = int(np.argmin(uv))
        y_star, m = float(ys[i0, 0]), float(uv[i0])

        def g_of(z):
            zc = np.clip(z, -1 + 1e-12, 1 - 1e-12)
            return float(g_values(fn.data, fn.profile, fn.field, np.array([[zc]]))[0])

        def rhs(y, state):
            u, du = state
            return [du, math.exp(-u) / g_of(du)]

        out = {}
        for sign in (+1, -1):
            ivp = solve_ivp(
                rhs,
                (y_star, y_star + sign * 12.0),
                [m, 0.0],
                rtol=1e-10,
                atol=1e-12,
                dense_output=True,
                max_step=0.05,
            )
            assert ivp.success
            out[sign] = ivp
        yq = np.linspace(y_star - 6, y_star + 6, 241)
        u_ivp = np.array(
            [out[1].sol(y)[0] if y >= y_star else out[-1].sol(y)[0] for y in yq]
        )
        u_num = sol.u.primal_value(yq.reshape(-1, 1))
        assert float(np.max(np.abs(u_num - u_ivp))) <= 1e-2
        # slope saturation at the dual vertices
        assert out[1].sol(y_star + 12.0)[1] == pytest.approx(1.0, abs=5e-3)
        assert out[-1].sol(y_star - 12.0)[1] == pytest.approx(-1.0, abs=5e-3)
