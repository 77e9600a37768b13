import numpy as np
import pytest

from frontlab.model import ModelParams, make_combustion_system
from frontlab.norms import norm_E, norm_unweighted
from frontlab.sim import (
    FieldState,
    Grid,
    Perturbation,
    SimulationBlowupError,
    apply_linear_exact,
    build_perturbation,
    dt_max,
    instability_scan,
    run,
    step_imex,
)
from frontlab.spectral import SymbolMatrix, eval_symbol, expm_triangular_2x2


def params(eps=0.5, kappa=1.0, c=1.0, alpha=0.4):
    return ModelParams(epsilon=eps, kappa=kappa, c=c, alpha=alpha)


class TestGrid:
    def test_basic_1d(self):
        g = Grid(L=20.0, N=64)
        assert g.d == 1 and g.shape == (64,)
        assert g.h(0) == pytest.approx(40.0 / 64)
        assert g.coords(0)[0] == -20.0
        assert g.cell_volume == pytest.approx(g.h(0))

    def test_basic_2d(self):
        g = Grid(L=(20.0, 10.0), N=(64, 32))
        assert g.d == 2
        assert g.cell_volume == pytest.approx(g.h(0) * g.h(1))

    @pytest.mark.parametrize("kw", [
        dict(L=20.0, N=48),        # not a power of two
        dict(L=20.0, N=8),         # too small
        dict(L=-1.0, N=64),
        dict(L=(10.0,), N=(64, 32)),
        dict(L=(10.0, 10.0, 10.0), N=(16, 16, 16)),  # d = 3 unsupported
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            Grid(**kw)


class TestBuildPerturbation:
    def test_zero_amplitude(self):
        g = Grid(L=20.0, N=64)
        state, rep = build_perturbation(g, Perturbation(amplitude=0.0), params())
        assert np.all(state.data == 0.0)
        assert rep["norm0"] == 0.0 and rep["normE"] == 0.0

    def test_gaussian_norm_closed_form(self):
        # |a exp(-(z/w)^2)|_{L2} = a (pi w^2 / 2)^(1/4) on the line
        g = Grid(L=30.0, N=512)
        for w, a in ((1.0, 1.0), (2.5, 0.3)):
            state, rep = build_perturbation(
                g, Perturbation(amplitude=a, widths=(w,), mask=(1, 0)), params())
            expect = a * (np.pi * w**2 / 2.0) ** 0.25
            assert rep["norm0"] == pytest.approx(expect, rel=1e-2)

    def test_rescale_to_eta_exact(self):
        g = Grid(L=20.0, N=128)
        p = params()
        state, rep = build_perturbation(
            g, Perturbation(eta=1e-3, center=(5.0,), widths=(2.0,), mask=(0, 1)), p)
        assert rep["normE"] == pytest.approx(1e-3, abs=1e-15)
        measured = norm_E(g, state.data, p.alpha, 0)
        assert abs(measured - 1e-3) <= 1e-12

    def test_bump_compact_support(self):
        g = Grid(L=20.0, N=256)
        state, _ = build_perturbation(
            g, Perturbation(shape="bump", center=(3.0,), widths=(2.0,)), params())
        z = g.coords(0)
        outside = np.abs(z - 3.0) >= 2.0
        assert np.all(state.data[:, outside] == 0.0)
        assert np.any(state.data != 0.0)

    def test_support_exceeding_grid_rejected(self):
        g = Grid(L=20.0, N=64)
        with pytest.raises(ValueError):
            build_perturbation(g, Perturbation(center=(19.0,), widths=(2.0,)), params())
        with pytest.raises(ValueError):
            build_perturbation(
                g, Perturbation(shape="bump", center=(0.0,), widths=(25.0,)), params())

    def test_mask_length_checked(self):
        g = Grid(L=20.0, N=64)
        with pytest.raises(ValueError):
            build_perturbation(g, Perturbation(mask=(1, 1, 1)), params())


class TestLinearExact:
    def test_zero_field_stays_zero(self):
        g = Grid(L=10.0, N=32)
        state = FieldState(t=0.0, data=np.zeros((2, 32)))
        out = apply_linear_exact(params(), g, state, 0.5)
        assert np.all(out.data == 0.0)
        assert out.t == 0.5

    def test_single_mode_decay_factor(self):
        # v2-only single Fourier mode decays by |exp(dt lambda_2(xi))|
        g = Grid(L=np.pi * 8, N=64)
        p = params(eps=0.3, kappa=1.5, c=0.8, alpha=0.3)
        z = g.coords(0)
        mode_idx = 5
        xi = g.xi(0)[mode_idx]
        data = np.zeros((2, 64))
        data[1] = np.cos(xi * z)
        state = FieldState(t=0.0, data=data)
        dt = 0.7
        out = apply_linear_exact(p, g, state, dt)
        lam2 = -p.epsilon * xi**2 + 1j * p.c * xi - p.kappa * np.exp(-p.kappa)
        expect = abs(np.exp(dt * lam2))
        amp_before = norm_unweighted(g, state.data[1], 0)
        amp_after = norm_unweighted(g, out.data[1], 0)
        assert amp_after / amp_before == pytest.approx(expect, rel=1e-12)

    def test_semigroup_property(self):
        g = Grid(L=15.0, N=128)
        p = params()
        rng = np.random.default_rng(0)
        data = rng.normal(size=(2, 128))
        state = FieldState(t=0.0, data=data)
        full = apply_linear_exact(p, g, state, 0.8)
        half = apply_linear_exact(p, g, apply_linear_exact(p, g, state, 0.4), 0.4)
        assert np.max(np.abs(full.data - half.data)) <= 1e-12

    def test_mode_by_mode_matches_symbol_exponential(self):
        g = Grid(L=8.0, N=32)
        p = params(eps=0.2, kappa=2.0, c=1.5, alpha=0.6)
        sym = SymbolMatrix.from_params(p, d=1, alpha=0.0)
        rng = np.random.default_rng(1)
        data = rng.normal(size=(2, 32))
        dt = 0.35
        out = apply_linear_exact(p, g, FieldState(t=0.0, data=data), dt)
        vh = np.fft.fft(data, axis=1)
        expect_h = np.empty_like(vh)
        for i, xi in enumerate(g.xi(0)):
            if i == g.N[0] // 2:  # Nyquist plane is projected out
                expect_h[:, i] = 0.0
                continue
            M = eval_symbol(sym, [xi])
            E = expm_triangular_2x2(M[0, 0], M[0, 1], M[1, 1], dt)
            expect_h[:, i] = E @ vh[:, i]
        expect = np.fft.ifft(expect_h, axis=1).real
        assert np.max(np.abs(out.data - expect)) <= 1e-10

    def test_2d_mode_exactness(self):
        g = Grid(L=(6.0, 4.0), N=(32, 16))
        p = params()
        sym = SymbolMatrix.from_params(p, d=2, alpha=0.0)
        rng = np.random.default_rng(2)
        data = rng.normal(size=(2, 32, 16))
        dt = 0.2
        out = apply_linear_exact(p, g, FieldState(t=0.0, data=data), dt)
        vh = np.fft.fftn(data, axes=(1, 2))
        for i in (0, 3, 17):
            for j in (0, 2, 9):
                xi = np.array([g.xi(0)[i], g.xi(1)[j]])
                M = eval_symbol(sym, xi)
                E = expm_triangular_2x2(M[0, 0], M[0, 1], M[1, 1], dt)
                expect = E @ vh[:, i, j]
                got_h = np.fft.fftn(out.data, axes=(1, 2))[:, i, j]
                assert np.max(np.abs(got_h - expect)) <= 1e-8 * max(1.0, np.abs(expect).max())


class TestStepImex:
    def test_zero_state_fixed(self):
        g = Grid(L=10.0, N=64)
        state = FieldState(t=0.0, data=np.zeros((2, 64)))
        for dt in (1e-3, 0.1, 1.0):
            out = step_imex(params(), g, state, dt)
            assert np.all(out.data == 0.0)

    def test_nonlinear_disabled_equals_linear(self):
        g = Grid(L=10.0, N=64)
        p = params()
        rng = np.random.default_rng(3)
        state = FieldState(t=0.0, data=0.1 * rng.normal(size=(2, 64)))
        a = step_imex(p, g, state, 0.25, nonlinear=False)
        b = apply_linear_exact(p, g, state, 0.25)
        assert np.max(np.abs(a.data - b.data)) <= 1e-14

    def test_triangular_decoupling_linear(self):
        # with the nonlinearity disabled the v2 trajectory ignores v1 entirely
        g = Grid(L=10.0, N=64)
        p = params()
        rng = np.random.default_rng(4)
        v2 = 0.3 * rng.normal(size=64)
        s_a = FieldState(t=0.0, data=np.stack([np.zeros(64), v2]))
        s_b = FieldState(t=0.0, data=np.stack([rng.normal(size=64), v2]))
        for _ in range(5):
            s_a = step_imex(p, g, s_a, 0.1, nonlinear=False)
            s_b = step_imex(p, g, s_b, 0.1, nonlinear=False)
        assert np.max(np.abs(s_a.data[1] - s_b.data[1])) <= 1e-14

    def test_nan_detection(self):
        g = Grid(L=10.0, N=64)
        data = np.zeros((2, 64))
        data[0, 5] = np.nan
        with pytest.raises(SimulationBlowupError):
            step_imex(params(), g, FieldState(t=2.0, data=data), 0.1)

    def test_dt_stability_bound_enforced(self):
        g = Grid(L=10.0, N=64)
        p = params()
        # huge-amplitude field gives an O(1) Jacobian estimate
        state, _ = build_perturbation(
            g, Perturbation(amplitude=50.0, widths=(2.0,)), p)
        bound = dt_max(p, state)
        assert np.isfinite(bound)
        with pytest.raises(ValueError):
            step_imex(p, g, state, 10.0 * bound)

    def test_splitting_order(self):
        # Richardson: observed order of Strang splitting >= 1.9 on smooth data
        g = Grid(L=15.0, N=128)
        p = params()
        state, _ = build_perturbation(
            g, Perturbation(amplitude=0.3, widths=(2.0,), mask=(1, 1)), p)
        T = 1.0
        ends = []
        for nsteps in (10, 20, 40):
            s = state.copy()
            dt = T / nsteps
            for _ in range(nsteps):
                s = step_imex(p, g, s, dt)
            ends.append(s.data.copy())
        e1 = np.max(np.abs(ends[0] - ends[1]))
        e2 = np.max(np.abs(ends[1] - ends[2]))
        order = np.log2(e1 / e2)
        assert order >= 1.9


class TestRun:
    def test_zero_perturbation_all_norms_zero(self):
        g = Grid(L=10.0, N=64)
        res = run(params(), g, Perturbation(amplitude=0.0), T=1.0, dt=0.1)
        for k in (0, 1):
            for name in ("norm0_v1", "norm0_v2", "norm0_v", "normalpha_v", "normE_v"):
                assert np.all(res.series.column(name, k) == 0.0)

    def test_deterministic(self):
        g = Grid(L=15.0, N=128)
        p = params()
        pert = Perturbation(eta=1e-3, center=(5.0,), widths=(2.0,), mask=(0, 1))
        r1 = run(p, g, pert, T=2.0, dt=0.05, record_every=5)
        r2 = run(p, g, pert, T=2.0, dt=0.05, record_every=5)
        assert np.array_equal(r1.series.times, r2.series.times)
        for key in r1.series.columns:
            assert np.array_equal(r1.series.columns[key], r2.series.columns[key])

    def test_norm_series_identities(self):
        g = Grid(L=15.0, N=128)
        res = run(params(), g,
                  Perturbation(eta=1e-2, center=(3.0,), widths=(2.0,), mask=(1, 1)),
                  T=2.0, dt=0.05, record_every=5)
        res.series.validate()

    def test_v2_gaussian_block_rate(self):
        # linear-only run: the v2 block decays at exactly kappa e^-kappa
        # when eps = 0 (pure transport plus uniform decay)
        from frontlab.norms import fit_decay

        p = ModelParams(epsilon=0.0, kappa=1.0, c=1.0, alpha=0.4)
        g = Grid(L=40.0, N=256)
        pert = Perturbation(eta=1e-3, center=(20.0,), widths=(2.0,), mask=(0, 1))
        res = run(p, g, pert, T=10.0, dt=0.05, record_every=10, nonlinear=False)
        fit = fit_decay(res.series.times, res.series.column("norm0_v2", 0))
        assert fit.nu == pytest.approx(np.exp(-1.0), rel=2e-2)
        assert fit.r_squared > 0.999999

    def test_periodic_domain_fidelity(self):
        # doubling L at fixed resolution leaves recorded norms unchanged
        # for perturbations supported well inside the domain
        p = params()
        pert = Perturbation(eta=1e-3, center=(0.0,), widths=(1.5,), mask=(1, 1))
        res_small = run(p, Grid(L=16.0, N=128), pert, T=1.0, dt=0.05, record_every=5)
        res_big = run(p, Grid(L=32.0, N=256), pert, T=1.0, dt=0.05, record_every=5)
        for name in ("norm0_v", "normalpha_v"):
            a = res_small.series.column(name, 0)
            b = res_big.series.column(name, 0)
            assert np.max(np.abs(a - b)) <= 1e-6 * np.max(np.abs(a))

    def test_boundary_contamination_warning(self):
        p = params()
        g = Grid(L=20.0, N=128)
        pert = Perturbation(amplitude=1e-3, center=(10.0,), widths=(3.0,), mask=(1, 1))
        with pytest.warns(RuntimeWarning, match="boundary contamination"):
            res = run(p, g, pert, T=0.2, dt=0.05)
        assert res.warnings

    def test_snapshots_bracket_run(self):
        g = Grid(L=10.0, N=64)
        res = run(params(), g, Perturbation(eta=1e-3, widths=(1.0,), mask=(0, 1)),
                  T=1.0, dt=0.1)
        assert res.snapshots[0].t == 0.0
        assert res.snapshots[-1].t == pytest.approx(1.0)


class TestInstabilityScan:
    def test_finds_threshold(self):
        p = params()
        g = Grid(L=15.0, N=128)
        pert = Perturbation(center=(3.0,), widths=(2.0,), mask=(1, 1))
        threshold, history = instability_scan(
            p, g, pert, T=1.0, dt=0.05, delta=0.05, eta0=1e-3)
        assert threshold is not None
        assert history[-1][1] > 0.05 or history[-1][1] == np.inf
        assert all(h[1] <= 0.05 for h in history[:-1])


class TestBlockSystemPath:
    def test_combustion_system_matches_params_linear(self):
        p = params()
        sys = make_combustion_system(p)
        g = Grid(L=10.0, N=32)
        rng = np.random.default_rng(5)
        data = 0.01 * rng.normal(size=(2, 32))
        state = FieldState(t=0.0, data=data)
        a = apply_linear_exact(p, g, state, 0.3)
        b = apply_linear_exact(sys, g, state, 0.3)
        assert np.max(np.abs(a.data - b.data)) <= 1e-12

    def test_combustion_system_matches_params_nonlinear(self):
        p = params()
        sys = make_combustion_system(p)
        g = Grid(L=10.0, N=32)
        state, _ = build_perturbation(
            g, Perturbation(amplitude=0.2, widths=(2.0,), mask=(1, 1)), p)
        a = step_imex(p, g, state, 0.1)
        b = step_imex(sys, g, state, 0.1)
        assert np.max(np.abs(a.data - b.data)) <= 1e-12


class TestGeneralBlockExperiment:
    """Quantitative decay experiment for a custom triangular block system."""

    @staticmethod
    def make_system():
        from frontlab.model import BlockSystem

        a12, b22, g = 0.5, -0.8, 0.1

        def f(v):
            v = np.asarray(v, dtype=float)
            m = g * np.sin(v[0])
            return np.stack([(a12 + m) * v[1], (b22 + m) * v[1]])

        def jac(v):
            v = np.asarray(v, dtype=float)
            return np.array([
                [g * np.cos(v[0]) * v[1], a12 + g * np.sin(v[0])],
                [g * np.cos(v[0]) * v[1], b22 + g * np.sin(v[0])],
            ])

        return BlockSystem(n1=1, n2=1, d1=[1.0], d2=[0.3], A1=np.zeros((1, 1)),
                           f=f, jac=jac, c=1.0, alpha=0.4, name="toy-triangular")

    def test_spectral_abscissas(self):
        from frontlab.spectral import SymbolMatrix, closed_form_abscissa, sweep_symbol

        sys = self.make_system()
        sym_u = SymbolMatrix.from_system(sys, d=1, alpha=0.0)
        assert closed_form_abscissa(sym_u) == 0.0
        sym_w = SymbolMatrix.from_system(sys, d=1)
        # weighted families: alpha^2 D_j - alpha c + B_jj
        expect = max(0.4**2 - 0.4, 0.3 * 0.4**2 - 0.4 - 0.8)
        assert closed_form_abscissa(sym_w) == pytest.approx(expect, abs=1e-15)
        sw = sweep_symbol(sym_w, m=201)
        assert abs(sw.realized_abscissa - expect) <= 1e-9

    def test_decay_experiment(self):
        from frontlab.norms import fit_decay, verify_stability_theorem

        sys = self.make_system()
        g = Grid(L=40.0, N=256)
        pert = Perturbation(eta=1e-3, center=(20.0,), widths=(2.0,), mask=(0, 1))
        with np.errstate(all="ignore"):
            res = run(sys, g, pert, T=12.0, dt=0.05, record_every=10)
        # second block decays at its zero-frequency rate 0.8 (plus diffusion)
        fit = fit_decay(res.series.times, res.series.column("norm0_v2", 0),
                        window=(1.0, 12.0))
        assert fit.nu >= 0.8
        rep = verify_stability_theorem(res.series, None, eta=1e-3, delta=1e-2,
                                       nu_expected=0.24, rho_expected=0.8,
                                       rate_floor=0.8, window=(1.0, 12.0))
        assert rep.overall
