import numpy as np
import pytest

from bibc.quantization import noise_variance
from bibc.rng import substream
from bibc.solvers import (
    SdpInstance,
    bisection,
    pgd_quadratic,
    project_per_antenna,
    rank1_extract,
    solve_p_d,
    solve_p_d_prime,
    solve_sdp,
)


def _rand_psd(rng, n, complex_=True):
    if complex_:
        b = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        return b @ b.conj().T
    b = rng.standard_normal((n, n))
    return b @ b.T


class TestSdp:
    def test_rayleigh_instance(self):
        rng = substream(10)
        G = _rand_psd(rng, 6)
        p = 3.0
        res = solve_sdp(SdpInstance(objective=G, constraints=[np.eye(6)], bounds=np.array([p])))
        expected = p * np.linalg.eigvalsh(G)[-1]
        assert res.status == "optimal"
        assert res.rel_gap <= 1e-7
        assert abs(res.primal_objective - expected) <= 1e-6 * expected
        lam, q = rank1_extract(res.X)
        assert np.isclose(lam, p, rtol=1e-5)

    def test_redundant_constraint_invariance(self):
        rng = substream(11)
        G = _rand_psd(rng, 5)
        base = solve_sdp(SdpInstance(objective=G, constraints=[np.eye(5)], bounds=np.array([2.0])))
        extra = solve_sdp(
            SdpInstance(
                objective=G,
                constraints=[np.eye(5), np.eye(5)],
                bounds=np.array([2.0, 5.0]),   # slack, never active
            )
        )
        assert abs(base.primal_objective - extra.primal_objective) <= 1e-6 * abs(
            base.primal_objective
        )

    def test_relaxation_dominates_rank1_sampling(self):
        rng = substream(12)
        n = 4
        G = _rand_psd(rng, n)
        A1 = _rand_psd(rng, n)
        p = 1.5
        b1 = 2.0
        res = solve_sdp(
            SdpInstance(objective=G, constraints=[np.eye(n), A1], bounds=np.array([p, b1]))
        )
        best = 0.0
        for _ in range(4000):
            v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            v /= np.linalg.norm(v)
            # largest feasible power along this direction
            s = min(p, b1 / max((v.conj() @ A1 @ v).real, 1e-300))
            val = s * (v.conj() @ G @ v).real
            best = max(best, val)
        assert res.primal_objective >= best - 1e-6 * abs(best)

    def test_weak_duality_and_feasibility_random(self):
        for seed in range(15):
            rng = substream(100 + seed)
            n = int(rng.integers(3, 8))
            m = int(rng.integers(1, 5))
            C = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
            C = (C + C.conj().T) / 2
            cons = [np.eye(n)]
            bounds = [float(rng.uniform(0.5, 4.0))]
            for _ in range(m):
                A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
                A = (A + A.conj().T) / 2 + n * np.eye(n)
                cons.append(A)
                bounds.append(float(rng.uniform(0.5, 4.0)))
            res = solve_sdp(SdpInstance(objective=C, constraints=cons, bounds=np.array(bounds)))
            assert res.status == "optimal"
            assert res.rel_gap <= 1e-7
            assert res.primal_objective <= res.dual_objective + 1e-5 * (
                1 + abs(res.dual_objective)
            )
            for a, bi in zip(cons, bounds):
                assert np.sum(a.conj() * res.X).real <= bi + 1e-6 * max(1.0, abs(bi))
            assert np.linalg.eigvalsh((res.X + res.X.conj().T) / 2)[0] >= -1e-8

    def test_extreme_scaling(self):
        rng = substream(13)
        G = _rand_psd(rng, 5) * 1e-12
        res = solve_sdp(SdpInstance(objective=G, constraints=[np.eye(5)], bounds=np.array([1e8])))
        expected = 1e8 * np.linalg.eigvalsh(G)[-1]
        assert abs(res.primal_objective - expected) <= 1e-6 * expected

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            SdpInstance(
                objective=np.array([[0.0, 1.0], [0.0, 0.0]]),
                constraints=[np.eye(2)],
                bounds=np.array([1.0]),
            )


class TestRank1:
    def test_exact_rank1(self):
        rng = substream(20)
        v = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        lam, q = rank1_extract(np.outer(v, v.conj()))
        assert np.isclose(lam, np.linalg.norm(v) ** 2)
        phase = np.vdot(q, v / np.linalg.norm(v))
        assert np.isclose(abs(phase), 1.0, atol=1e-10)

    def test_diagonal(self):
        lam, q = rank1_extract(np.diag([3.0, 1.0]))
        assert lam == 3.0
        assert np.isclose(abs(q[0]), 1.0)

    def test_residual_matches_tail_eigenvalues(self):
        rng = substream(21)
        X = _rand_psd(rng, 6)
        lam, q = rank1_extract(X)
        resid = np.linalg.norm(X - lam * np.outer(q, q.conj()))
        eigs = np.linalg.eigvalsh(X)
        assert np.isclose(resid, np.sqrt(np.sum(eigs[:-1] ** 2)), rtol=1e-9)


class TestBisection:
    def test_threshold_predicate(self):
        res = bisection(lambda t: t <= 5.0, 0.0, 10.0, 1e-6)
        assert res.feasible
        assert abs(res.t - 5.0) <= 1e-6
        assert res.iterations == int(np.ceil(np.log2(10.0 / 1e-6)))

    def test_infeasible_floor(self):
        res = bisection(lambda t: False, 0.0, 1.0, 1e-3)
        assert not res.feasible

    def test_witness_from_last_feasible(self):
        res = bisection(lambda t: (t <= 2.0, f"w{t:.3f}"), 0.0, 8.0, 1e-3)
        assert res.witness.startswith("w")
        assert float(res.witness[1:]) <= 2.0


def _ao_instance(seed, n_r=6, n_c=5, bits=2, dl_scale=1.0):
    rng = substream(seed)
    h_r = rng.standard_normal(n_r) + 1j * rng.standard_normal(n_r)
    h_c = rng.standard_normal(n_c) + 1j * rng.standard_normal(n_c)
    H_BL = np.outer(h_r, h_c)
    H_DL = dl_scale * (rng.standard_normal((n_r, n_c)) + 1j * rng.standard_normal((n_r, n_c)))
    return H_BL, H_DL, np.full(n_r, bits)


class TestQuadraticTransformAo:
    def test_high_resolution_reduces_to_mrt(self):
        H_BL, H_DL, _ = _ao_instance(30)
        bits = np.full(H_BL.shape[0], 16)
        p = 2.0
        state = solve_p_d(H_BL, H_DL, bits, p)
        # with D ~ I the objective is ||H_BL x||^2, maximized by MRT
        h_c = H_BL[0] / H_BL[0, 0] if False else None
        _, s, vh = np.linalg.svd(H_BL)
        mrt = np.sqrt(p) * vh[0].conj()
        best = np.sum(np.abs(H_BL @ mrt) ** 2)
        got = np.sum(np.abs(H_BL @ state.x) ** 2)
        assert abs(got - best) <= 1e-6 * best

    def test_surrogate_monotone_every_iteration(self):
        H_BL, H_DL, bits = _ao_instance(31, bits=1)
        state = solve_p_d(H_BL, H_DL, bits, 3.0)
        for before, after in state.surrogate_trace:
            assert after >= before - 1e-9 * max(1.0, abs(before))
        # true objective trace non-decreasing too
        t = np.array(state.objective_trace)
        assert np.all(np.diff(t) >= -1e-9 * np.maximum(1.0, np.abs(t[:-1])))

    def test_mu_zero_when_unconstrained_feasible(self):
        from bibc.solvers import _power_constrained_update

        rng = substream(32)
        A = _rand_psd(rng, 4) + 4 * np.eye(4)
        x_free = np.linalg.solve(A, rng.standard_normal(4) + 1j * rng.standard_normal(4))
        c = A @ x_free
        p_big = 4.0 * np.linalg.norm(x_free) ** 2
        x, mu = _power_constrained_update(A, c, p_big)
        assert mu == 0.0
        assert np.allclose(x, x_free, rtol=1e-8)

    def test_mu_bisection_hits_power(self):
        from bibc.solvers import _power_constrained_update

        rng = substream(33)
        A = _rand_psd(rng, 5)
        c = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        p = 0.5
        x, mu = _power_constrained_update(A, c, p)
        assert mu > 0
        assert abs(np.linalg.norm(x) ** 2 - p) <= 1e-8 * p


class TestPgd:
    def test_projection_cases(self):
        p = 4.0
        x = np.array([1.0 + 0j, 3.0 * np.exp(1j * 0.7) * np.sqrt(p)])
        out = project_per_antenna(x, p)
        assert out[0] == x[0]
        assert np.isclose(abs(out[1]), np.sqrt(p))
        assert np.isclose(np.angle(out[1]), 0.7)

    def test_pgd_matches_coordinate_descent_oracle(self):
        rng = substream(34)
        n = 6
        A = _rand_psd(rng, n)
        c = 3.0 * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        p = 0.3
        x, info = pgd_quadratic(A, c, p, tol=1e-12)
        assert info["converged"]
        # independent oracle: cyclic coordinate minimization with radial clip
        y = np.zeros(n, dtype=complex)
        for _ in range(3000):
            for i in range(n):
                r = c[i] - A[i] @ y + A[i, i] * y[i]
                yi = r / A[i, i].real
                if abs(yi) > np.sqrt(p):
                    yi = yi / abs(yi) * np.sqrt(p)
                y[i] = yi

        def obj(v):
            return (v.conj() @ A @ v).real - 2 * (c.conj() @ v).real

        assert abs(obj(x) - obj(y)) <= 1e-5 * max(1.0, abs(obj(y)))

    def test_all_iterates_feasible_and_monotone(self):
        H_BL, H_DL, bits = _ao_instance(35, bits=1)
        p = 1.7
        state = solve_p_d_prime(H_BL, H_DL, bits, p)
        assert np.max(np.abs(state.x) ** 2) <= p * (1 + 1e-12)
        for before, after in state.surrogate_trace:
            assert after >= before - 1e-9 * max(1.0, abs(before))


def test_p_d_weighted_objective_beats_unweighted_mrt():
    # at 1 bit with strong direct-link leakage the noise-aware beam must be
    # at least as good in the weighted metric as plain MRT
    H_BL, H_DL, bits = _ao_instance(36, bits=1, dl_scale=4.0)
    p = 2.0

    def weighted(x):
        d = noise_variance(np.abs(H_BL @ x) ** 2, np.abs(H_DL @ x) ** 2, bits) + 1
        return float(np.sum(np.abs(H_BL @ x) ** 2 / d))

    _, _, vh = np.linalg.svd(H_BL)
    mrt = np.sqrt(p) * vh[0].conj()
    state = solve_p_d(H_BL, H_DL, bits, p)
    assert state.objective >= weighted(mrt) - 1e-9
