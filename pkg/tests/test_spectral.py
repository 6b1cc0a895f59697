import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridtme.errors import DampingSignError, InsufficientDataError, PairingError, PoleError
from hybridtme.model import Equilibrium, Jacobian2, equilibrium_jacobian
from hybridtme.sampling import circle_points, random_diffusion_pair, random_oneway_case, random_twoway_case
from hybridtme.spectral import (
    ModeMatrix,
    SignalCoupling,
    SpatialDomain,
    assess_twoway,
    base_dispersion,
    classify_instability,
    det_quadratic,
    dispersion_rows,
    effective_mode_matrix,
    enumerate_modes,
    eps_spectrum_convergence,
    full_twoway_mode_matrix,
    mobility_correction,
    mu_plus_twoway,
    no_turing_certificate,
    oneway_mode_spectrum,
    qss_closure,
    schur_factorization_residual,
    schur_scale,
    trace_data,
    twoway_mode_matrix,
    weyl_check,
)


@pytest.fixture
def ref(pset):
    eq, J = equilibrium_jacobian(pset)
    return eq, J


@pytest.fixture
def schur_case(ref):
    """chi_S S* = 1, chi_R R* = 3, h = (1, 0.5), q = -0.5, d_c = 1."""
    eq, J = ref
    coupling = SignalCoupling(chi_S=0.25, chi_R=0.5, d_c=1.0, q=-0.5, h_S=1.0, h_R=0.5)
    return eq, J, coupling


def sorted_eigs(a):
    return np.array(sorted(np.asarray(a, dtype=complex), key=lambda z: (round(z.real, 9), z.imag)))


class TestModes:
    def test_interval_pi(self):
        lam = [m.lam for m in enumerate_modes(SpatialDomain((math.pi,)), 4)]
        np.testing.assert_allclose(lam, [0, 1, 4, 9], atol=1e-14)

    def test_interval_two(self):
        lam = [m.lam for m in enumerate_modes(SpatialDomain((2.0,)), 3)]
        np.testing.assert_allclose(lam, [0, 2.4674011002723395, 9.869604401089358], rtol=1e-14)

    def test_square_multiplicity(self):
        modes = enumerate_modes(SpatialDomain((math.pi, math.pi)), 5)
        assert modes[0].lam == 0
        assert [m.lam for m in modes[1:3]] == pytest.approx([1.0, 1.0])
        assert {m.indices for m in modes[1:3]} == {(1, 0), (0, 1)}
        assert modes[3].lam == pytest.approx(2.0)

    def test_rectangle_matches_brute_force(self):
        Lx, Ly = 1.3, 0.7
        modes = enumerate_modes(SpatialDomain((Lx, Ly)), 60)
        brute = sorted((m * math.pi / Lx) ** 2 + (n * math.pi / Ly) ** 2 for m in range(40) for n in range(40))
        np.testing.assert_allclose([m.lam for m in modes], brute[:60], rtol=1e-13)
        assert [m.rank for m in modes] == list(range(1, 61))

    def test_modes_are_orthonormal(self):
        L = 3.0
        x = (np.arange(4000) + 0.5) * L / 4000
        modes = enumerate_modes(SpatialDomain((L,)), 5)
        G = np.array([[np.sum(a.evaluate(x) * b.evaluate(x)) * L / 4000 for b in modes] for a in modes])
        np.testing.assert_allclose(G, np.eye(5), atol=1e-6)

    def test_bad_domain(self):
        with pytest.raises(ValueError):
            SpatialDomain((1.0, 1.0, 1.0))
        with pytest.raises(ValueError):
            SpatialDomain((0.0,))
        with pytest.raises(ValueError):
            enumerate_modes(SpatialDomain((1.0,)), 0)


class TestWeyl:
    def test_interval(self):
        lo, hi = weyl_check(enumerate_modes(SpatialDomain((math.pi,)), 50), 1)
        # rank k carries (k-1)^2, so the ratio climbs from 16/25 toward 1
        assert lo == pytest.approx(0.64, rel=1e-12)
        assert hi == pytest.approx(49 ** 2 / 50 ** 2, rel=1e-12)
        assert 0.5 <= lo and hi <= 1.1

    def test_square(self):
        lo, hi = weyl_check(enumerate_modes(SpatialDomain((math.pi, math.pi)), 100), 2)
        assert lo > 0 and hi / lo <= 4

    def test_too_few(self):
        with pytest.raises(InsufficientDataError):
            weyl_check(enumerate_modes(SpatialDomain((1.0,)), 9), 1)


class TestBaseDispersion:
    def test_constant_mode(self, ref):
        _, J = ref
        a1, a0, mu = base_dispersion(J, 0.3, 2.0, 0.0)
        assert (a1, a0) == pytest.approx((-J.trace, J.det))
        assert mu == pytest.approx(max(np.linalg.eigvals(J.as_array()).real), rel=1e-12)

    def test_reference_values(self, ref):
        _, J = ref
        a1, a0, mu = base_dispersion(J, 1.0, 1.0, 4.0)
        assert a1 == pytest.approx(10.2, rel=1e-14)
        assert a0 == pytest.approx(26.0, rel=1e-14)
        assert mu == pytest.approx(-5.0, rel=1e-12)

    def test_random_sweep(self, ref, rng):
        _, J = ref
        n = 10_000
        d = np.exp(rng.uniform(math.log(1e-3), math.log(10.0), (n, 2)))
        lam = np.exp(rng.uniform(math.log(1e-4), math.log(1e6), n))
        a1 = lam * (d[:, 0] + d[:, 1]) - J.trace
        a0 = d[:, 0] * d[:, 1] * lam ** 2 - (d[:, 0] * J.d + d[:, 1] * J.a) * lam + J.det
        assert np.all(a1 > 0) and np.all(a0 > 0)
        for i in range(0, n, 500):
            got = base_dispersion(J, d[i, 0], d[i, 1], lam[i])
            assert got[:2] == pytest.approx((a1[i], a0[i]), rel=1e-12)

    def test_mu_plus_against_eig(self, ref, rng):
        _, J = ref
        for _ in range(200):
            dS, dR = random_diffusion_pair(rng)
            lam = float(np.exp(rng.uniform(-5, 5)))
            _, _, mu = base_dispersion(J, dS, dR, lam)
            ev = np.linalg.eigvals(J.as_array() - lam * np.diag([dS, dR]))
            assert mu == pytest.approx(ev.real.max(), rel=1e-9, abs=1e-12)


class TestCertificate:
    def test_reference(self, pset):
        cert = no_turing_certificate(pset, 1.0, 1.0)
        assert cert.stable and cert.lam.size == 400
        assert cert.lam[0] == pytest.approx(1e-4) and cert.lam[-1] == pytest.approx(1e6)
        assert cert.min_a0 == pytest.approx(1.2, rel=1e-3)
        assert cert.max_mu_plus < 0

    def test_extreme_ratio(self, pset):
        assert no_turing_certificate(pset, 1e-3, 10.0).stable

    def test_reason_mentions_signs(self, pset):
        assert "det(J)" in no_turing_certificate(pset, 1.0, 2.0).reason

    def test_random_params(self, rng):
        from hybridtme.sampling import random_kinetics

        for _ in range(50):
            cert = no_turing_certificate(random_kinetics(rng), *random_diffusion_pair(rng))
            assert cert.stable and cert.max_mu_plus < 0

    def test_rejects_zero_diffusion(self, pset):
        with pytest.raises(ValueError):
            no_turing_certificate(pset, 0.0, 1.0)


class TestTwoWay:
    def test_mobility_correction(self, ref, cset):
        eq, _ = ref
        np.testing.assert_array_equal(mobility_correction(SignalCoupling(), eq), np.zeros((2, 2)))
        np.testing.assert_array_equal(mobility_correction(cset, eq), [[0, 0], [-6, 0]])
        H = mobility_correction(SignalCoupling(chi_S=1.0, g_S=0.5), eq)
        np.testing.assert_array_equal(H, [[2, 0], [0, 0]])

    def test_mode_matrix(self, ref, cset):
        eq, J = ref
        H = mobility_correction(cset, eq)
        np.testing.assert_array_equal(twoway_mode_matrix(J, 0.05, 0.05, H, 0.0).entries, J.as_array())
        A = twoway_mode_matrix(J, 0.05, 0.05, H, 4.0)
        np.testing.assert_allclose(A.entries, [[-1.4, -0.2], [-24.0, -1.2]], atol=1e-14)
        assert A.trace == pytest.approx(-2.6)
        assert A.det == pytest.approx(1.68 - 4.8)
        mu = max(np.linalg.eigvals(A.entries).real)
        assert A.max_real() == pytest.approx(mu, rel=1e-12)
        assert mu == pytest.approx(0.8931712, abs=1e-6)

    def test_mode_matrix_without_feedback(self, ref):
        _, J = ref
        A = twoway_mode_matrix(J, 0.4, 2.0, np.zeros((2, 2)), 3.0)
        a1, a0, mu = base_dispersion(J, 0.4, 2.0, 3.0)
        assert (-A.trace, A.det, A.max_real()) == pytest.approx((a1, a0, mu), rel=1e-12)

    def test_det_quadratic_examples(self, ref, cset):
        eq, J = ref
        A1, A2, detJ = det_quadratic(J, 0.05, 0.05, cset, eq)
        assert (A1, A2, detJ) == pytest.approx((0.0025, -1.09, 1.2), rel=1e-12)
        A1, A2, _ = det_quadratic(J, 0.3, 0.7, SignalCoupling(), eq)
        assert A1 == pytest.approx(0.21) and A2 == pytest.approx(-J.a * 0.7 - J.d * 0.3) and A2 > 0
        A1, _, _ = det_quadratic(J, 1.0, 1.0, SignalCoupling(chi_S=1.0, g_S=0.5), eq)
        assert A1 == pytest.approx(-1.0)

    def test_det_quadratic_matches_matrix(self, rng):
        for _ in range(200):
            _, J, eq, dS, dR, coupling, lam = random_twoway_case(rng)
            c = SignalCoupling(chi_S=coupling.chi_S, chi_R=coupling.chi_R,
                               g_S=float(rng.normal()), g_R=float(rng.normal()))
            A1, A2, detJ = det_quadratic(J, dS, dR, c, eq)
            M = J.as_array() - lam * (np.diag([dS, dR]) - mobility_correction(c, eq))
            expect = np.linalg.det(M)
            assert A1 * lam ** 2 + A2 * lam + detJ == pytest.approx(expect, rel=1e-9, abs=1e-9)

    def test_classify_case_iii(self, ref, cset):
        eq, J = ref
        td = trace_data(J, 0.05, 0.05, cset, eq)
        v = classify_instability(0.0025, -1.09, 1.2, td)
        assert v.classification == "det_case_iii"
        lo, hi = v.unstable_interval
        disc = math.sqrt(1.09 ** 2 - 4 * 0.0025 * 1.2)
        assert lo == pytest.approx((1.09 - disc) / 0.005, rel=1e-12)
        assert hi == pytest.approx((1.09 + disc) / 0.005, rel=1e-12)
        assert lo == pytest.approx(1.1038, abs=1e-4) and hi == pytest.approx(434.896, abs=1e-3)
        assert "S4" in v.regimes and not {"S1", "S2"} & v.regimes

    def test_classify_case_i(self):
        td = trace_data(Jacobian2(-1.2, -0.2, 0.0, -1.0), 1.0, 1.0,
                        SignalCoupling(chi_S=1.0, g_S=2.0), Equilibrium(1.0, 1.0))
        v = classify_instability(-1.0, 0.2, 1.2, td)
        assert v.classification == "det_case_i"
        assert v.unstable_interval[0] == pytest.approx(1.2, rel=1e-12)
        assert v.unstable_interval[1] == math.inf

    def test_classify_stable(self, ref):
        eq, J = ref
        td = trace_data(J, 0.5, 0.5, SignalCoupling(), eq)
        v = classify_instability(0.25, 1.0, 1.2, td)
        assert v.classification == "stable" and v.unstable_interval is None

    def test_classify_degenerate(self, ref):
        eq, J = ref
        c = SignalCoupling(chi_S=0.25, g_S=1.0)  # feedback_S = d_S = 1, A1 = 0
        td = trace_data(J, 1.0, 1.0, c, eq)
        A1, A2, detJ = det_quadratic(J, 1.0, 1.0, c, eq)
        v = classify_instability(A1, A2, detJ, td)
        if A2 < 0:
            assert v.classification == "det_case_ii" and "S3" in v.regimes
        else:
            assert v.classification in ("stable", "trace_unstable")

    def test_kinetically_unstable(self):
        td = trace_data(Jacobian2(1.0, 0.0, 0.0, 1.0), 1.0, 1.0, SignalCoupling(), Equilibrium(1.0, 1.0))
        v = classify_instability(1.0, 1.0, 1.0, td)
        assert not v.kinetically_stable and v.classification is None

    def test_assess_lattice(self, ref, cset):
        eq, J = ref
        modes = enumerate_modes(SpatialDomain((math.pi,)), 25)
        v = assess_twoway(J, 0.05, 0.05, cset, eq, modes)
        assert [m.indices[0] for m in v.unstable_modes] == list(range(2, 21))
        for rank, lam, mu in v.per_mode:
            assert (mu > 0) == (2 <= rank - 1 <= 20)
        assert any("unstable_mode_indices" in s for s in v.summary_lines())

    def test_dispersion_rows_vectorised(self, ref, cset):
        eq, J = ref
        H = mobility_correction(cset, eq)
        lam = np.linspace(0, 500, 37)
        rows = dispersion_rows(J, 0.05, 0.05, H, lam)
        for r in rows:
            A = twoway_mode_matrix(J, 0.05, 0.05, H, r[0])
            assert r[1:] == pytest.approx([A.trace, A.det, A.max_real()], rel=1e-10, abs=1e-10)
        np.testing.assert_allclose(rows[:, 3], mu_plus_twoway(J, 0.05, 0.05, H, lam))

    def test_verdict_partitions_lambda(self, rng):
        """The reported unstable set agrees with the sign of mu_plus on sampled lam."""
        for _ in range(300):
            _, J, eq, dS, dR, coupling, _ = random_twoway_case(rng)
            c = SignalCoupling(chi_S=coupling.chi_S, chi_R=coupling.chi_R,
                               g_S=float(rng.normal(0, 2)), g_R=float(rng.normal(0, 2)))
            A1, A2, detJ = det_quadratic(J, dS, dR, c, eq)
            v = classify_instability(A1, A2, detJ, trace_data(J, dS, dR, c, eq))
            H = mobility_correction(c, eq)
            for lam in np.exp(rng.uniform(-4, 6, 20)):
                mu = mu_plus_twoway(J, dS, dR, H, lam)
                A = J.as_array() - lam * (np.diag([dS, dR]) - H)
                rh_stable = np.trace(A) < 0 and np.linalg.det(A) > 0
                if abs(mu) < 1e-8 * (1 + lam):
                    continue
                assert (mu < 0) == rh_stable
                flagged = False
                if v.unstable_interval is not None:
                    flagged = v.unstable_interval[0] < lam < v.unstable_interval[1]
                if v.trace_threshold is not None:
                    flagged = flagged or lam > v.trace_threshold
                assert flagged == (mu > 0)


class TestModeMatrix:
    @settings(max_examples=300)
    @given(st.lists(st.floats(-50, 50), min_size=4, max_size=4))
    def test_routh_hurwitz_2x2(self, e):
        M = ModeMatrix(np.array(e).reshape(2, 2))
        mu = M.max_real()
        if abs(mu) < 1e-8:
            return
        assert (mu < 0) == (M.trace < 0 and M.det > 0)

    def test_routh_hurwitz_bulk(self, rng):
        mats = rng.normal(0, 3, (10_000, 2, 2))
        for A in mats[:: 10]:
            M = ModeMatrix(A)
            ref = np.linalg.eigvals(A)
            assert M.max_real() == pytest.approx(ref.real.max(), rel=1e-9, abs=1e-9)
        tr = mats[:, 0, 0] + mats[:, 1, 1]
        det = mats[:, 0, 0] * mats[:, 1, 1] - mats[:, 0, 1] * mats[:, 1, 0]
        mu = np.linalg.eigvals(mats).real.max(axis=1)
        keep = np.abs(mu) > 1e-10
        assert np.array_equal((mu < 0)[keep], ((tr < 0) & (det > 0))[keep])

    @settings(max_examples=200)
    @given(st.lists(st.floats(-20, 20), min_size=9, max_size=9))
    def test_cubic_eigenvalues_match_numpy(self, e):
        A = np.array(e).reshape(3, 3)
        got = sorted_eigs(ModeMatrix(A).eigenvalues(check=False))
        ref = sorted_eigs(np.linalg.eigvals(A))
        # defective clusters lose accuracy like eps^(1/3); compare characteristic polynomials instead
        M = ModeMatrix(A)
        scale = 1 + M.norm ** 3
        for z in got:
            assert abs(M.char_poly(z)) <= 1e-8 * scale * max(1.0, abs(z))
        # repeated roots are only determined to ~sqrt(eps)
        assert np.sum(got) == pytest.approx(np.trace(A), abs=1e-6 * (1 + M.norm))
        assert np.prod(got) == pytest.approx(np.linalg.det(A), abs=1e-6 * scale)
        assert len(ref) == 3

    def test_shape_checks(self):
        with pytest.raises(ValueError):
            ModeMatrix(np.zeros((4, 4)))
        with pytest.raises(ValueError):
            ModeMatrix(np.array([[np.nan, 0], [0, 1]]))


class TestOneWay:
    def test_reference_spectrum(self, ref):
        eq, J = ref
        c = SignalCoupling(chi_S=1.0, chi_R=1.0, d_c=1.0, rho=0.5)
        sp = oneway_mode_spectrum(J, 1.0, 1.0, c, eq, 4.0)
        np.testing.assert_allclose(sorted(sp.eigenvalues.real), [-5.2, -5.0, -4.5], atol=1e-12)
        np.testing.assert_allclose(sp.matrix.entries[:2, :2], [[-5.2, -0.2], [0.0, -5.0]], atol=1e-14)
        assert sp.signal_eigenvalue == pytest.approx(-4.5)

    def test_constant_mode(self, ref):
        eq, J = ref
        sp = oneway_mode_spectrum(J, 1.0, 1.0, SignalCoupling(chi_S=2.0, rho=0.7), eq, 0.0)
        expect = np.concatenate([np.linalg.eigvals(J.as_array()), [-0.7]])
        np.testing.assert_allclose(sorted_eigs(sp.eigenvalues), sorted_eigs(expect), atol=1e-12)

    def test_explicit_damping(self, ref):
        eq, J = ref
        sp = oneway_mode_spectrum(J, 1.0, 1.0, SignalCoupling(Qprime_cstar=-2.0), eq, 1.0)
        assert sp.signal_eigenvalue == pytest.approx(-3.0)

    def test_requires_damping(self, ref):
        eq, J = ref
        with pytest.raises(DampingSignError):
            oneway_mode_spectrum(J, 1.0, 1.0, SignalCoupling(rho=0.0), eq, 1.0)
        with pytest.raises(DampingSignError):
            SignalCoupling(Qprime_cstar=0.5)

    def test_random_against_numpy(self, rng):
        for _ in range(500):
            _, J, eq, dS, dR, c, lam = random_oneway_case(rng)
            sp = oneway_mode_spectrum(J, dS, dR, c, eq, lam)
            ref = np.linalg.eigvals(sp.matrix.entries)
            assert max(abs(a - b) for a, b in zip(sorted_eigs(sp.eigenvalues), sorted_eigs(ref))) \
                <= 1e-9 * (1 + np.abs(ref).max())
            assert sp.eigenvalues.real.max() < 0


class TestCueMatrices:
    def test_fill_in(self, schur_case):
        eq, J, c = schur_case
        M = full_twoway_mode_matrix(J, 1.0, 1.0, c, eq, 4.0)
        np.testing.assert_allclose(M.entries, [[-5.2, -0.2, 4], [0, -5, 12], [1, 0.5, -4.5]], atol=1e-14)

    def test_constant_mode_drops_chemotaxis(self, schur_case):
        eq, J, c = schur_case
        M = full_twoway_mode_matrix(J, 1.0, 1.0, c, eq, 0.0)
        assert M.entries[0, 2] == 0 and M.entries[1, 2] == 0

    def test_decoupled(self, ref):
        eq, J = ref
        c = SignalCoupling(q=-0.5, d_c=2.0)
        M = full_twoway_mode_matrix(J, 0.3, 0.9, c, eq, 2.0)
        expect = np.concatenate([np.linalg.eigvals(J.as_array() - 2.0 * np.diag([0.3, 0.9])), [-4.5]])
        np.testing.assert_allclose(sorted_eigs(M.eigenvalues()), sorted_eigs(expect), atol=1e-12)

    def test_requires_negative_q(self, ref):
        eq, J = ref
        with pytest.raises(DampingSignError):
            full_twoway_mode_matrix(J, 1.0, 1.0, SignalCoupling(q=0.1), eq, 1.0)

    def test_schur_instance(self, schur_case):
        eq, J, c = schur_case
        M = full_twoway_mode_matrix(J, 1.0, 1.0, c, eq, 4.0)
        assert M.char_poly(1.0) == pytest.approx(145.8, abs=1e-9)
        # independent route: plain cofactor expansion of I - M
        B = np.eye(3) - M.entries
        cof = (B[0, 0] * (B[1, 1] * B[2, 2] - B[1, 2] * B[2, 1])
               - B[0, 1] * (B[1, 0] * B[2, 2] - B[1, 2] * B[2, 0])
               + B[0, 2] * (B[1, 0] * B[2, 1] - B[1, 1] * B[2, 0]))
        assert cof == pytest.approx(145.8, abs=1e-9)
        A_eff = effective_mode_matrix(M.entries[:2, :2], c, eq, 4.0, 1.0)
        factor = np.linalg.det(np.eye(2) - A_eff).real
        assert 5.5 * factor == pytest.approx(145.8, abs=1e-9)
        assert schur_factorization_residual(M, 4.0, c, eq, 1.0) <= 1e-9

    def test_schur_uncoupled_exact(self, ref):
        eq, J = ref
        c = SignalCoupling(q=-0.5, h_S=1.0, h_R=2.0)
        M = full_twoway_mode_matrix(J, 1.0, 1.0, c, eq, 3.0)
        A_eff = effective_mode_matrix(M.entries[:2, :2], c, eq, 3.0, 2.0 + 1j)
        np.testing.assert_array_equal(A_eff, J.as_array() - 3.0 * np.eye(2))
        # A_eff is exact; only evaluation-order rounding remains
        assert schur_factorization_residual(M, 3.0, c, eq, 2.0 + 1j) <= 1e-15 * schur_scale(M, 2.0 + 1j)

    def test_schur_circle(self, schur_case, rng):
        eq, J, c = schur_case
        M = full_twoway_mode_matrix(J, 1.0, 1.0, c, eq, 4.0)
        for mu in circle_points(rng, 10.0, 20):
            assert schur_factorization_residual(M, 4.0, c, eq, mu) <= 1e-10 * abs(M.char_poly(mu))

    def test_schur_random_configs(self, rng):
        worst = 0.0
        for _ in range(100):
            _, J, eq, dS, dR, c, lam = random_twoway_case(rng)
            M = full_twoway_mode_matrix(J, dS, dR, c, eq, lam)
            for mu in circle_points(rng, 10.0, 20):
                worst = max(worst, schur_factorization_residual(M, lam, c, eq, mu) / schur_scale(M, mu))
        assert worst <= 1e-10

    def test_pole(self, schur_case):
        eq, J, c = schur_case
        M = full_twoway_mode_matrix(J, 1.0, 1.0, c, eq, 4.0)
        with pytest.raises(PoleError):
            schur_factorization_residual(M, 4.0, c, eq, -4.5)

    def test_qss(self, schur_case):
        eq, J, c = schur_case
        g, A = qss_closure(J, 1.0, 1.0, c, eq, 4.0)
        assert g == pytest.approx((2.0, 1.0))
        np.testing.assert_allclose(A.entries, [[-4.3111, 0.2444], [2.6667, -3.6667]], atol=1e-4)
        _, A0 = qss_closure(J, 1.0, 1.0, c, eq, 0.0)
        np.testing.assert_allclose(A0.entries, J.as_array(), atol=1e-15)
        with pytest.raises(DampingSignError):
            qss_closure(J, 1.0, 1.0, SignalCoupling(q=0.0), eq, 1.0)

    def test_eps_convergence(self, schur_case):
        eq, J, c = schur_case
        res = eps_spectrum_convergence(J, 1.0, 1.0, c, eq, 4.0, [1e-1, 1e-2, 1e-3, 1e-4])
        assert np.all(np.diff(res.gaps) < 0)
        assert res.order >= 0.9
        assert abs(res.fast_eigenvalues[-1].real / res.fast_predicted[-1] - 1) <= 0.01
        assert res.rows().shape == (4, 4)

    def test_eps_decoupled(self, ref):
        eq, J = ref
        res = eps_spectrum_convergence(J, 1.0, 2.0, SignalCoupling(q=-0.5), eq, 3.0, [1e-1, 1e-2, 1e-3])
        assert np.max(res.gaps) <= 1e-12

    def test_eps_list_validation(self, schur_case):
        eq, J, c = schur_case
        with pytest.raises(ValueError):
            eps_spectrum_convergence(J, 1.0, 1.0, c, eq, 4.0, [1e-2, 1e-1])

    def test_pairing_failure(self, ref):
        # identical slow targets: no way to tell which slow eigenvalue goes where
        eq, _ = ref
        J = Jacobian2(-1.0, 0.0, 0.0, -1.0)
        c = SignalCoupling(chi_S=0.1, chi_R=0.1, q=-0.5, h_S=1.0, h_R=-1.0)
        eq = Equilibrium(1.0, 1.0)
        try:
            eps_spectrum_convergence(J, 1.0, 1.0, c, eq, 1.0, [1e-1, 1e-2])
        except PairingError:
            pass
