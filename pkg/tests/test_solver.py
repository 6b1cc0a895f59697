import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridtme.errors import DivergenceError, GridMismatchError, PositivityError
from hybridtme.model import ModelParams
from hybridtme.solver import (
    FieldState,
    Grid,
    InitialRecipe,
    SolverConfig,
    chemotaxis_divergence,
    initial_state,
    integrate_damped_heat,
    laplacian_neumann,
    run_simulation,
    spectral_D_oracle,
    step,
    write_snapshot_csv,
)
from hybridtme.spectral import SignalCoupling, SpatialDomain


def interval(L=math.pi, n=256):
    return Grid(SpatialDomain((L,)), (n,))


def neumann_matrix(n, h):
    main = -2.0 * np.ones(n)
    main[0] = main[-1] = -1.0
    return sp.diags([np.ones(n - 1), main, np.ones(n - 1)], [-1, 0, 1]) / h ** 2


@pytest.fixture
def core_params(pset):
    return pset.replace(d_S=0.01, d_R=0.01, d_D=1.0)


class TestGrid:
    def test_geometry(self):
        g = interval(2.0, 16)
        assert g.spacing == (0.125,)
        np.testing.assert_allclose(g.axes()[0][[0, -1]], [0.0625, 1.9375])
        sq = Grid(SpatialDomain((1.0, 2.0)), (10,))
        assert sq.cells == (10, 10) and sq.cell_volume == pytest.approx(0.02)

    def test_too_coarse(self):
        with pytest.raises(ValueError):
            interval(1.0, 4)


class TestLaplacian:
    def test_eigenfunction(self):
        g = interval()
        x = g.axes()[0]
        err = np.max(np.abs(laplacian_neumann(np.cos(2 * x), g) + 4 * np.cos(2 * x)))
        assert err <= 1e-3

    def test_second_order(self):
        errs = []
        for n in (64, 128):
            g = interval(n=n)
            x = g.axes()[0]
            errs.append(np.max(np.abs(laplacian_neumann(np.cos(3 * x), g) + 9 * np.cos(3 * x))))
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)

    def test_constant_nullspace(self):
        g = Grid(SpatialDomain((1.0, 3.0)), (12, 20))
        assert np.all(laplacian_neumann(np.full(g.cells, 2.5), g) == 0)

    def test_matches_sparse_assembly(self, rng):
        g = interval(1.7, 40)
        L = neumann_matrix(40, g.spacing[0])
        u = rng.normal(size=40)
        np.testing.assert_allclose(laplacian_neumann(u, g), L @ u, rtol=1e-12, atol=1e-10)
        dense = L.toarray()
        np.testing.assert_allclose(dense, dense.T)
        assert np.linalg.eigvalsh(dense).max() <= 1e-9

    def test_2d_separable(self, rng):
        g = Grid(SpatialDomain((1.0, 2.0)), (10, 14))
        u = rng.normal(size=g.cells)
        Lx = neumann_matrix(10, g.spacing[0]).toarray()
        Ly = neumann_matrix(14, g.spacing[1]).toarray()
        np.testing.assert_allclose(laplacian_neumann(u, g), Lx @ u + u @ Ly.T, atol=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-10, 10), min_size=16, max_size=16))
    def test_zero_net_flux(self, vals):
        g = interval(2.0, 16)
        total = np.sum(laplacian_neumann(np.array(vals), g))
        assert abs(total) <= 1e-10 * (1 + max(abs(v) for v in vals)) / g.spacing[0] ** 2

    def test_shape_mismatch(self):
        with pytest.raises(GridMismatchError):
            laplacian_neumann(np.zeros(10), interval(n=12))


class TestChemotaxis:
    def test_constant_population(self):
        g = interval()
        x = g.axes()[0]
        got = chemotaxis_divergence(np.full(256, 1.5), np.cos(2 * x), 0.7, g)
        assert np.max(np.abs(got - 4 * 0.7 * 1.5 * np.cos(2 * x))) <= 1e-2

    def test_trivial_cases(self, rng):
        g = interval(n=32)
        pop = rng.uniform(0, 1, 32)
        assert np.all(chemotaxis_divergence(pop, np.full(32, 3.0), 2.0, g) == 0)
        assert np.all(chemotaxis_divergence(pop, rng.normal(size=32), 0.0, g) == 0)

    def test_conservative(self, rng):
        g = Grid(SpatialDomain((1.0, 1.0)), (16, 16))
        total = np.sum(chemotaxis_divergence(rng.uniform(0, 2, g.cells), rng.normal(size=g.cells), 1.3, g))
        assert abs(total) < 1e-9

    def test_mismatch(self):
        g = interval(n=16)
        with pytest.raises(GridMismatchError):
            chemotaxis_divergence(np.zeros(16), np.zeros(17), 1.0, g)


class TestStep:
    def test_equilibrium_stationary(self, core_params):
        g = interval(n=32)
        ones = np.ones(32)
        # with D = 0 the switching pushes A to 0, so the rest state has A = 0
        st0 = FieldState(4.0 * ones, 6.0 * ones, 0.0 * ones, 0.3 * ones, 0.0 * ones)
        cfg = SolverConfig(t_end=1.0)
        st1 = step(st0, core_params, SignalCoupling(), cfg, g)
        assert np.max(np.abs(st1.stack() - st0.stack())) <= 1e-12

    def test_switching_conserved(self, core_params, rng):
        g = interval(n=64)
        st0 = FieldState(*rng.uniform(0.1, 5.0, (5, 64)))
        cfg = SolverConfig(t_end=1.0)
        st1 = step(st0, core_params, SignalCoupling(), cfg, g)
        drift = np.abs((st1.P + st1.A) - (st0.P + st0.A))
        assert np.all(drift <= 1e-14 * (np.abs(st0.P) + np.abs(st0.A)))

    def test_cue_field_required(self, core_params):
        g = interval(n=16)
        st0 = FieldState(*np.ones((5, 16)))
        with pytest.raises(ValueError):
            step(st0, core_params, SignalCoupling(), SolverConfig(t_end=1.0, variant="oneway"), g)

    def test_mode_two_growth_after_transient(self, pset, cset):
        params = pset.replace(d_S=0.05, d_R=0.05, d_D=0.05)
        g = interval()
        cfg = SolverConfig(t_end=2.0, variant="twoway_reduced",
                           initial={"S": InitialRecipe("eq", (2,), 1e-4), "R": InitialRecipe("eq")})
        rec = run_simulation(cfg, params, cset, g)
        x = g.axes()[0]
        w = math.sqrt(2 / math.pi) * np.cos(2 * x)

        def amp(state):
            return np.sum((state.S - 4.0) * w) * g.spacing[0]

        state = rec.final
        a0 = amp(state)
        n = 200
        for _ in range(n):
            state = step(state, params, cset, cfg, g, dt=0.1 / n)
        ratio = amp(state) / a0
        assert ratio == pytest.approx(math.exp(0.8932 * 0.1), rel=0.10)


class TestDOracle:
    def test_constant_mode(self, pset):
        g = interval(2.0, 16)
        D = spectral_D_oracle([((0,), 3.0)], pset, 2.0, g)
        np.testing.assert_allclose(D, 3.0 / math.sqrt(2.0) * math.exp(-0.6))

    def test_single_mode_amplitude(self):
        g = interval(math.pi, 64)
        p = ModelParams(d_D=1.0, gamma_d=0.3)
        D = spectral_D_oracle([((1,), 2.0)], p, 1.0, g)
        expect = 2.0 * math.sqrt(2 / math.pi) * math.exp(-1.3) * np.cos(g.axes()[0])
        np.testing.assert_allclose(D, expect, rtol=1e-13)

    def test_fd_against_oracle(self):
        p = ModelParams(d_D=1.0, gamma_d=0.3)
        g = interval(math.pi, 256)
        coeffs = [((0,), 2.0), ((1,), 0.5), ((3,), 0.2)]
        D0 = spectral_D_oracle(coeffs, p, 0.0, g)
        D = integrate_damped_heat(D0, p, g, 0.5)
        assert np.max(np.abs(D - spectral_D_oracle(coeffs, p, 0.5, g))) <= 1e-4

    def test_heat_integrator_equals_full_solver(self, core_params):
        g = interval(math.pi, 32)
        x = g.axes()[0]
        D0 = 1.0 + 0.5 * np.cos(x)
        init = FieldState(np.full(32, 4.0), np.full(32, 6.0), D0, np.full(32, 0.5), np.full(32, 0.5))
        cfg = SolverConfig(t_end=0.5, dt=0.001)
        rec = run_simulation(cfg, core_params, SignalCoupling(), g, initial=init)
        D = integrate_damped_heat(D0, core_params, g, 0.5, dt=0.001)
        np.testing.assert_array_equal(D, rec.final.D)


class TestRuns:
    def test_divergence_reports_field(self, core_params):
        g = interval(math.pi, 64)
        cfg = SolverConfig(t_end=5.0, dt=0.5, initial={"S": InitialRecipe(2.0, (3,), 1.0),
                                                      "R": InitialRecipe(1.0), "D": InitialRecipe(1.0, (5,), 0.9)})
        with pytest.raises(DivergenceError) as info:
            run_simulation(cfg, core_params.replace(d_D=5.0), SignalCoupling(), g)
        err = info.value
        assert err.field in ("S", "R", "D", "P", "A")
        assert all(isinstance(i, int) for i in err.cell)
        assert err.record is not None and err.record.status == "diverged"
        assert len(err.record.snapshots) >= 1

    def test_positivity_error_is_divergence(self):
        assert issubclass(PositivityError, DivergenceError)

    def test_deterministic(self, core_params, tmp_path):
        g = interval(math.pi, 32)
        cfg = SolverConfig(t_end=1.0, seed=5, initial={"S": InitialRecipe("eq", noise=0.1),
                                                       "R": InitialRecipe("eq", noise=0.1),
                                                       "D": InitialRecipe(1.0)})
        a = run_simulation(cfg, core_params, SignalCoupling(), g)
        b = run_simulation(cfg, core_params, SignalCoupling(), g)
        pa = write_snapshot_csv(tmp_path / "a.csv", a.final, g)
        pb = write_snapshot_csv(tmp_path / "b.csv", b.final, g)
        assert pa.read_bytes() == pb.read_bytes()
        assert pa.read_text().splitlines()[0] == "x,S,R,D,P,A"

    def test_noise_streams_independent(self, core_params):
        g = interval(math.pi, 16)
        base = {"S": InitialRecipe(1.0, noise=0.1)}
        extra = dict(base, D=InitialRecipe(1.0, noise=0.2))
        a = initial_state(SolverConfig(t_end=1.0, initial=base, seed=3), core_params, SignalCoupling(), g)
        b = initial_state(SolverConfig(t_end=1.0, initial=extra, seed=3), core_params, SignalCoupling(), g)
        np.testing.assert_array_equal(a.S, b.S)

    def test_snapshot_cadence(self, core_params):
        g = interval(math.pi, 16)
        cfg = SolverConfig(t_end=1.0, snapshot_every=0.25, initial={"S": InitialRecipe(1.0)})
        rec = run_simulation(cfg, core_params, SignalCoupling(), g)
        np.testing.assert_allclose(rec.times, [0, 0.25, 0.5, 0.75, 1.0])
        assert rec.series("S").shape == (5, 16)

    def test_twoway_full_cue_equilibrium(self, pset):
        c = SignalCoupling(chi_S=0.1, chi_R=0.1, q=-0.5, h_S=1.0, h_R=0.5, epsilon=0.1)
        g = interval(math.pi, 16)
        cfg = SolverConfig(t_end=0.5, variant="twoway_full",
                           initial={k: InitialRecipe("eq") for k in ("S", "R", "c")})
        rec = run_simulation(cfg, pset, c, g)
        assert rec.final.c == pytest.approx(np.full(16, 14.0))
        assert np.max(np.abs(rec.final.S - 4.0)) < 1e-12

    def test_2d_csv_header(self, core_params, tmp_path):
        g = Grid(SpatialDomain((1.0, 1.0)), (8, 8))
        st0 = FieldState(*np.ones((5, 8, 8)))
        p = write_snapshot_csv(tmp_path / "s.csv", st0, g)
        lines = p.read_text().splitlines()
        assert lines[0] == "x,y,S,R,D,P,A" and len(lines) == 65
