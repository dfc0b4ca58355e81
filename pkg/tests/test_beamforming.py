import numpy as np
import pytest
from scipy.linalg import null_space

from bibc.beamforming import (
    build_multi_matrices,
    canonical_phase,
    dli_metric,
    nullspace_basis,
    sinr_per_device,
    solve_p_alpha0,
    solve_p_alpha0_prime_closed,
    solve_p_alpha0_prime_convex,
    solve_p_bf,
    solve_p_bf_prime,
    solve_p_dli,
    solve_p_multi,
    solve_problem,
)
from bibc.rng import substream

from conftest import RandomWorkspace, random_instance


class TestPBf:
    def test_objective_closed_form(self):
        h_c, h_r, H_DL, ref = random_instance(1)
        p = 2.0
        sol = solve_p_bf(h_c, h_r, p)
        expected = p * np.linalg.norm(h_r) ** 2 * np.linalg.norm(h_c) ** 2
        assert np.isclose(sol.objective, expected, rtol=1e-12)
        assert np.isclose(sol.total_power, p, rtol=1e-12)

    def test_beats_random_feasible_vectors(self):
        h_c, h_r, _, _ = random_instance(2)
        p = 1.0
        sol = solve_p_bf(h_c, h_r, p)
        H_BL = np.outer(h_r, h_c)
        rng = substream(22)
        for _ in range(1000):
            v = rng.standard_normal(h_c.size) + 1j * rng.standard_normal(h_c.size)
            v *= np.sqrt(p) / np.linalg.norm(v)
            assert np.sum(np.abs(H_BL @ v) ** 2) <= sol.objective * (1 + 1e-12)

    def test_single_antenna(self):
        sol = solve_p_bf(np.array([0.3 - 0.4j]), np.array([1.0 + 0j]), 4.0)
        assert np.isclose(abs(sol.x[0]), 2.0)

    def test_zero_channel_rejected(self):
        with pytest.raises(ValueError):
            solve_p_bf(np.zeros(3, dtype=complex), np.ones(2, dtype=complex), 1.0)


class TestPBfPrime:
    def test_single_antenna_coincides_with_total_power(self):
        h_c = np.array([0.2 + 0.1j])
        h_r = np.array([1.0 + 0j, 0.5j])
        a = solve_p_bf(h_c, h_r, 1.0)
        b = solve_p_bf_prime(h_c, h_r, 1.0)
        assert np.isclose(a.objective, b.objective, rtol=1e-12)

    def test_dominates_total_power_objective(self):
        h_c, h_r, _, _ = random_instance(3)
        a = solve_p_bf(h_c, h_r, 1.0)
        b = solve_p_bf_prime(h_c, h_r, 1.0)
        assert b.objective >= a.objective * (1 - 1e-12)

    def test_equal_magnitude_closed_form(self):
        rng = substream(23)
        n_c = 5
        phases = np.exp(1j * rng.uniform(0, 2 * np.pi, n_c))
        h_c = 0.3 * phases
        h_r = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        p = 2.0
        sol = solve_p_bf_prime(h_c, h_r, p)
        expected = n_c**2 * p * np.linalg.norm(h_r) ** 2 * 0.3**2
        assert np.isclose(sol.objective, expected, rtol=1e-12)

    def test_zero_entry_transmits_nothing(self):
        h_c = np.array([0.0, 0.5 + 0.5j])
        h_r = np.array([1.0 + 0j])
        sol = solve_p_bf_prime(h_c, h_r, 1.0)
        assert sol.x[0] == 0


class TestDliMetric:
    def test_reader_only_reference_is_zero(self):
        h_c, h_r, H_DL, _ = random_instance(4, n_r=3)
        x = h_c.conj()
        assert dli_metric(x, H_DL, np.outer(h_r, h_c), np.arange(3)) == 0.0

    def test_nullspace_vector_suppresses(self):
        h_c, h_r, H_DL, ref = random_instance(5, n_c=8, n_r=4, n_ref=1)
        Z = nullspace_basis(H_DL[1:]).Z
        x = Z @ (Z.conj().T @ h_c.conj())
        c = dli_metric(x, H_DL, np.outer(h_r, h_c), ref)
        assert 10 * np.log10(c) <= -200

    def test_equal_power_ratio_one(self):
        H_DL = np.array([[1.0 + 0j, 0.0]])
        H_BL = np.array([[0.0 + 1j, 0.0]])
        x = np.array([1.0 + 0j, 0.0])
        assert np.isclose(dli_metric(x, H_DL, H_BL, np.array([], dtype=int)), 1.0)

    def test_dead_backscatter_row_infinite(self):
        H_DL = np.array([[1.0 + 0j]])
        H_BL = np.array([[0.0 + 0j]])
        assert dli_metric(np.array([1.0 + 0j]), H_DL, H_BL, np.array([], dtype=int)) == np.inf


class TestNullspace:
    def test_zero_matrix_full_basis(self):
        basis = nullspace_basis(np.zeros((0, 5)))
        assert basis.Z.shape == (5, 5)
        assert np.allclose(basis.Z.conj().T @ basis.Z, np.eye(5))

    def test_random_matrix_against_scipy_oracle(self):
        rng = substream(24)
        H = rng.standard_normal((3, 8)) + 1j * rng.standard_normal((3, 8))
        basis = nullspace_basis(H)
        assert basis.Z.shape == (8, 5)
        assert np.linalg.norm(H @ basis.Z) <= 1e-10 * np.linalg.norm(H)
        assert np.allclose(basis.Z.conj().T @ basis.Z, np.eye(5), atol=1e-12)
        oracle = null_space(H)
        # same subspace: projection onto the oracle's span is the identity map
        proj = oracle @ (oracle.conj().T @ basis.Z)
        assert np.linalg.norm(proj - basis.Z) <= 1e-9


class TestPAlpha0:
    def test_reduces_to_mrt_without_direct_link(self):
        h_c, h_r, _, _ = random_instance(6)
        H_DL = np.zeros((4, h_c.size), dtype=complex)
        sol = solve_p_alpha0((h_c, h_r, H_DL, np.arange(4)), 1.5)
        mrt = solve_p_bf(h_c, h_r, 1.5)
        assert np.isclose(sol.objective, mrt.objective, rtol=1e-10)
        assert np.linalg.norm(canonical_phase(sol.x) - canonical_phase(mrt.x)) <= 1e-8

    def test_nullspace_membership_and_forms_agree(self):
        h_c, h_r, H_DL, ref = random_instance(7, n_c=10, n_r=5)
        sol = solve_p_alpha0((h_c, h_r, H_DL, ref), 2.0)
        assert sol.diagnostics["nullspace_residual"] <= 1e-10
        assert sol.diagnostics["form_mismatch"] <= 1e-8
        assert np.isclose(sol.total_power, 2.0, rtol=1e-10)
        assert sol.feasible

    def test_empty_nullspace_infeasible(self):
        h_c, h_r, H_DL, ref = random_instance(8, n_c=4, n_r=6, n_ref=1)
        sol = solve_p_alpha0((h_c, h_r, H_DL, ref), 1.0)
        assert not sol.feasible
        assert sol.objective == 0.0


class TestPAlpha0Prime:
    def test_closed_form_saturates_one_antenna(self):
        h_c, h_r, H_DL, ref = random_instance(9, n_c=9, n_r=4)
        p = 3.0
        sol = solve_p_alpha0_prime_closed((h_c, h_r, H_DL, ref), p)
        assert np.isclose(np.max(sol.per_antenna_power), p, rtol=1e-12)
        assert sol.feasible

    def test_convex_dominates_closed_form(self):
        for seed in range(12):
            h_c, h_r, H_DL, ref = random_instance(50 + seed, n_c=8, n_r=4)
            closed = solve_p_alpha0_prime_closed((h_c, h_r, H_DL, ref), 1.0)
            convex = solve_p_alpha0_prime_convex((h_c, h_r, H_DL, ref), 1.0)
            assert convex.objective >= closed.objective * (1 - 1e-9)
            assert convex.feasible
            assert convex.diagnostics["nullspace_residual"] <= 1e-9

    def test_convex_recovers_phase_alignment_without_direct_link(self):
        h_c, h_r, _, _ = random_instance(10, n_c=6)
        H_DL = np.zeros((3, 6), dtype=complex)
        conv = solve_p_alpha0_prime_convex((h_c, h_r, H_DL, np.arange(3)), 1.0)
        pa = solve_p_bf_prime(h_c, h_r, 1.0)
        assert abs(conv.objective - pa.objective) <= 1e-6 * pa.objective

    def test_convex_matches_slsqp_oracle(self):
        from scipy.optimize import minimize

        h_c, h_r, H_DL, ref = random_instance(11, n_c=6, n_r=3, n_ref=1)
        p = 1.0
        basis = nullspace_basis(H_DL[1:])
        Z = basis.Z
        v = h_c.conj() / np.linalg.norm(h_c)
        d = Z.shape[1]

        def unpack(t):
            return (t[:d] + 1j * t[d:])

        def neg_obj(t):
            return -np.real(v.conj() @ (Z @ unpack(t)))

        cons = [
            {
                "type": "ineq",
                "fun": (lambda t, c=c: p - np.abs(Z[c] @ unpack(t)) ** 2),
            }
            for c in range(h_c.size)
        ]
        rng = substream(25)
        best = None
        for _ in range(5):
            t0 = 0.1 * rng.standard_normal(2 * d)
            r = minimize(neg_obj, t0, constraints=cons, method="SLSQP",
                         options={"maxiter": 500, "ftol": 1e-14})
            if best is None or r.fun < best:
                best = r.fun
        oracle_obj = np.linalg.norm(h_r) ** 2 * np.linalg.norm(h_c) ** 2 * best**2
        sol = solve_p_alpha0_prime_convex((h_c, h_r, H_DL, ref), p)
        assert sol.objective >= oracle_obj * (1 - 1e-5)


class TestPDli:
    def test_large_alpha_matches_unconstrained(self):
        h_c, h_r, H_DL, ref = random_instance(12)
        p = 1.0
        sol = solve_p_dli((h_c, h_r, H_DL, ref), alpha=1e10, p_max=p)
        mrt = solve_p_bf(h_c, h_r, p)
        assert abs(sol.objective - mrt.objective) <= 0.01 * mrt.objective

    def test_relaxation_dominates_nullspace_solution(self):
        h_c, h_r, H_DL, ref = random_instance(13, n_c=8, n_r=4)
        a0 = solve_p_alpha0((h_c, h_r, H_DL, ref), 1.0)
        dli = solve_p_dli((h_c, h_r, H_DL, ref), alpha=0.5, p_max=1.0)
        assert dli.diagnostics["relaxed_objective"] >= a0.objective * (1 - 1e-7)

    def test_per_antenna_variant_feasible_power(self):
        h_c, h_r, H_DL, ref = random_instance(14, n_c=6, n_r=4)
        p = 0.7
        sol = solve_p_dli((h_c, h_r, H_DL, ref), alpha=1.0, p_max=p, per_antenna=True)
        assert np.max(sol.per_antenna_power) <= p * (1 + 1e-9)
        assert sol.diagnostics["sdp_status"] == "optimal"


class TestCanonicalization:
    def test_first_significant_entry_real_positive(self):
        for seed in range(8):
            h_c, h_r, H_DL, ref = random_instance(80 + seed)
            for sol in (
                solve_p_bf(h_c, h_r, 1.0),
                solve_p_bf_prime(h_c, h_r, 1.0),
                solve_p_alpha0((h_c, h_r, H_DL, ref), 1.0),
            ):
                x = sol.x
                if np.linalg.norm(x) == 0:
                    continue
                idx = np.flatnonzero(np.abs(x) > 1e-12 * np.linalg.norm(x))[0]
                assert abs(np.angle(x[idx])) <= 1e-10
                assert x[idx].real > 0


class TestMulti:
    def _multi_channels(self, seed, n_aps=5, ants=2, n_bdes=2):
        ws = RandomWorkspace(seed, n_aps=n_aps, ants=ants, n_bdes=n_bdes)
        from bibc.scene import Partition

        non_ref = [i for i in ws.ap_ids if i != ws.ref_id]
        part = Partition(
            ce_ids=tuple(non_ref[: len(non_ref) // 2 + 1]),
            reader_ids=tuple([ws.ref_id] + non_ref[len(non_ref) // 2 + 1 :]),
            ref_id=ws.ref_id,
        )
        return ws.assemble(part)

    def test_matrices_psd_and_sinr_identity(self):
        ch = self._multi_channels(26)
        basis = nullspace_basis(ch.H_DL_prime)
        mats = build_multi_matrices(ch.h_c_all, ch.h_r_all, ch.H_DL, basis.Z, 1.0)
        rng = substream(27)
        for k, (A, B, C) in enumerate(mats):
            assert np.linalg.eigvalsh(A)[0] >= -1e-12 * max(np.linalg.norm(A), 1e-300)
            assert np.linalg.eigvalsh(B)[0] >= -1e-12 * max(np.linalg.norm(B), 1e-300)
        # quadratic forms reproduce the SINR for random coefficient vectors
        noise = np.array([np.linalg.norm(ch.h_r_all[k]) ** 2 for k in range(ch.n_bdes)])
        for _ in range(10):
            b = rng.standard_normal(basis.dim) + 1j * rng.standard_normal(basis.dim)
            x = basis.Z @ b
            direct = sinr_per_device(x, ch.h_c_all, ch.h_r_all, ch.H_DL, 1.0)
            for k, (A, B, C) in enumerate(mats):
                num = (b.conj() @ A @ b).real
                den = (b.conj() @ (B + C) @ b).real + noise[k]
                assert np.isclose(num / den, direct[k], rtol=1e-8)

    def test_single_device_case_has_zero_cross_matrix(self):
        ch = self._multi_channels(28, n_bdes=1)
        basis = nullspace_basis(ch.H_DL_prime)
        mats = build_multi_matrices(ch.h_c_all, ch.h_r_all, ch.H_DL, basis.Z, 1.0)
        assert np.linalg.norm(mats[0][2]) == 0.0

    def test_single_device_matches_nullspace_solution(self):
        ch = self._multi_channels(29, n_bdes=1)
        p = 2.0
        multi = solve_p_multi(ch, p, bisect_tol_rel=1e-5)
        a0 = solve_p_alpha0((ch.h_c, ch.h_r, ch.H_DL, ch.ref_rows), p)
        s_multi = sinr_per_device(multi.x, ch.h_c_all, ch.h_r_all, ch.H_DL, 1.0)[0]
        s_a0 = sinr_per_device(a0.x, ch.h_c_all, ch.h_r_all, ch.H_DL, 1.0)[0]
        assert s_multi >= s_a0 * (1 - 1e-3)

    def test_bisection_iteration_bound_and_balance(self):
        ch = self._multi_channels(30, n_aps=6, n_bdes=2)
        tol_rel = 1e-3
        sol = solve_p_multi(ch, 1.0, bisect_tol_rel=tol_rel)
        assert sol.feasible
        d = sol.diagnostics
        t_max0 = d["bisect_eps"] / tol_rel
        assert d["bisect_iterations"] <= int(np.ceil(np.log2(1.0 / tol_rel))) + 1
        sinrs = np.asarray(d["sinr_per_device"])
        assert np.min(sinrs) >= d["t_bisect"] * (1 - 1e-6)


class TestDominanceChain:
    def test_chain_on_random_instances(self):
        for seed in range(10):
            h_c, h_r, H_DL, ref = random_instance(150 + seed, n_c=7, n_r=5)
            mats = (h_c, h_r, H_DL, ref)
            a0 = solve_p_alpha0(mats, 1.0)
            dli = solve_p_dli(mats, alpha=1.0, p_max=1.0)
            bf = solve_p_bf(h_c, h_r, 1.0)
            assert a0.objective <= dli.diagnostics["relaxed_objective"] * (1 + 1e-7)
            assert dli.diagnostics["relaxed_objective"] <= bf.objective * (1 + 1e-7)


def test_solve_problem_dispatch(random_workspace):
    ws = random_workspace(31, n_aps=4, ants=2)
    from bibc.scene import Partition

    part = Partition(ce_ids=(2, 3), reader_ids=(1, 4), ref_id=1)
    ch = ws.assemble(part)
    for kind in ("p_bf", "p_bf_prime", "p_alpha0", "p_alpha0_prime_closed"):
        sol = solve_problem(kind, ch, 1.0)
        assert sol.x.shape == (ch.n_c,)
    sol = solve_problem("p_d", ch, 1.0, quantizer_bits=np.full(ch.n_r, 2))
    assert sol.x.shape == (ch.n_c,)
    with pytest.raises(ValueError):
        solve_problem("nope", ch, 1.0)
