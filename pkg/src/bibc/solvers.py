"""Low-level numerical engines.

* A dense primal-dual interior-point solver for small semidefinite programs
  in trace-inequality form, with optional extra nonnegative scalar variables
  (used for feasibility-margin reformulations).  Complex Hermitian data is
  handled through the standard symmetric 2n x 2n real embedding.
* Best rank-1 extraction of a PSD matrix.
* A generic bisection on a monotone feasibility predicate.
* Alternating optimization of the noise-weighted backscatter energy via the
  quadratic transform, under a total power constraint (closed-form inner
  update with a water-level bisection) or per-antenna constraints (projected
  gradient descent with element-wise radial projection).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from bibc.quantization import noise_variance

# ---------------------------------------------------------------------------
# Semidefinite programming
# ---------------------------------------------------------------------------


@dataclass
class SdpInstance:
    """max <C,X> + lp_c.u  s.t.  <A_i,X> + lp_A[i].u <= b_i, X PSD, u >= 0.

    All matrices must be symmetric (real) or Hermitian (complex); mixing is
    not allowed.  `lp_c`/`lp_A` introduce a few auxiliary nonnegative scalar
    variables coupled linearly into the constraints.
    """

    objective: np.ndarray
    constraints: list
    bounds: np.ndarray
    lp_objective: np.ndarray | None = None
    lp_constraints: np.ndarray | None = None
    tolerance: float = 1e-9

    def __post_init__(self) -> None:
        self.objective = np.asarray(self.objective)
        self.constraints = [np.asarray(a) for a in self.constraints]
        self.bounds = np.asarray(self.bounds, dtype=float)
        n = self.objective.shape[0]
        for a in [self.objective, *self.constraints]:
            if a.shape != (n, n):
                raise ValueError("constraint/objective dimensions disagree")
            if np.linalg.norm(a - a.conj().T) > 1e-12 * max(1.0, np.linalg.norm(a)):
                raise ValueError("matrices must be Hermitian/symmetric")
        if len(self.constraints) != self.bounds.size:
            raise ValueError("need one bound per constraint")
        if (self.lp_objective is None) != (self.lp_constraints is None):
            raise ValueError("lp_objective and lp_constraints go together")

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.objective) or any(
            np.iscomplexobj(a) for a in self.constraints
        )


@dataclass
class SdpResult:
    X: np.ndarray
    lp: np.ndarray
    y: np.ndarray
    primal_objective: float
    dual_objective: float
    rel_gap: float
    primal_residual: float
    dual_residual: float
    iterations: int
    status: str

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _real_embedding(h: np.ndarray) -> np.ndarray:
    a, b = h.real, h.imag
    return np.block([[a, -b], [b, a]])


def _chol_jitter(a: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, retrying with growing diagonal jitter."""
    scale = max(float(np.trace(a)) / max(1, a.shape[0]), 1e-300)
    jitter = 0.0
    for _ in range(6):
        try:
            return sla.cholesky(a + jitter * np.eye(a.shape[0]), lower=True)
        except np.linalg.LinAlgError:
            jitter = max(jitter * 100.0, 1e-14 * scale)
    raise np.linalg.LinAlgError("matrix far from positive definite")


def _max_step_psd(x_chol: np.ndarray, dx: np.ndarray) -> float:
    """Largest alpha with X + alpha dX PSD, given the Cholesky factor of X."""
    w = sla.solve_triangular(x_chol, dx, lower=True)
    w = sla.solve_triangular(x_chol, w.T, lower=True)
    lam = sla.eigvalsh((w + w.T) / 2.0)[0]
    if lam >= -1e-14:
        return np.inf
    return -1.0 / lam


def _max_step_pos(v: np.ndarray, dv: np.ndarray) -> float:
    neg = dv < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-v[neg] / dv[neg]))


def _solve_real_sdp(
    C: np.ndarray,
    A: np.ndarray,
    b: np.ndarray,
    lp_c: np.ndarray,
    lp_A: np.ndarray,
    tol: float,
    max_iters: int = 200,
) -> SdpResult:
    """Infeasible-start Mehrotra predictor-corrector with the HKM direction.

    Cone: one dense PSD block plus a nonnegative block holding the auxiliary
    scalars and the constraint slacks.
    """
    n = C.shape[0]
    m = b.size
    d = lp_c.size
    p = d + m
    G = np.hstack([lp_A, np.eye(m)])          # (m, p) coupling of the LP block
    chat = np.concatenate([lp_c, np.zeros(m)])

    X = np.eye(n) * max(1.0, np.max(np.abs(b)) / max(1, n))
    v = np.full(p, max(1.0, np.max(np.abs(b))))
    y = np.zeros(m)
    zscale = max(1.0, np.linalg.norm(C), np.max(np.abs(chat)) if p else 1.0)
    Z = np.eye(n) * zscale
    w = np.full(p, zscale)

    Amat = np.stack(A) if m else np.zeros((0, n, n))
    bnorm = 1.0 + np.linalg.norm(b)
    cnorm = 1.0 + np.linalg.norm(C) + np.linalg.norm(chat)

    best = None
    status = "max_iterations"
    mu0 = (np.sum(X * Z) + v @ w) / (n + p)
    it = 0
    for it in range(1, max_iters + 1):
        try:
            Lz = _chol_jitter(Z)
        except np.linalg.LinAlgError:
            status = "numerical_breakdown"
            break
        Zinv = sla.cho_solve((Lz, True), np.eye(n))
        Zinv = (Zinv + Zinv.T) / 2.0

        rp = b - np.einsum("iab,ab->i", Amat, X) - G @ v
        Rd = C + Z - np.tensordot(y, Amat, axes=1)
        rdlp = chat + w - G.T @ y
        mu = (np.sum(X * Z) + v @ w) / (n + p)

        pobj = float(np.sum(C * X) + chat @ v)
        dobj = float(b @ y)
        rel_gap = abs(pobj - dobj) / (1.0 + max(abs(pobj), abs(dobj)))
        prim_res = np.linalg.norm(rp) / bnorm
        dual_res = (np.linalg.norm(Rd) + np.linalg.norm(rdlp)) / cnorm

        snapshot = (X.copy(), v[:d].copy(), y.copy(), pobj, dobj, rel_gap, prim_res, dual_res)
        if best is None or rel_gap + prim_res + dual_res < best[0]:
            best = (rel_gap + prim_res + dual_res, snapshot)
        if rel_gap <= tol and prim_res <= tol * 10 and dual_res <= tol * 10:
            status = "optimal"
            break
        if mu <= 1e-15 * mu0 or mu <= 1e-280:
            # complementarity exhausted at floating-point precision
            status = "optimal" if best[0] <= 1e-7 else "stalled"
            break

        # Schur complement M = [tr(A_i X A_j Z^{-1})] + G diag(v/w) G^T
        P = Amat @ X
        Q = Amat @ Zinv
        K = np.einsum("iab,jba->ij", P, Q)
        M = (K + K.T) / 2.0 + (G * (v / w)) @ G.T
        M = M + (1e-13 * np.trace(M) / max(1, m)) * np.eye(m)
        try:
            Mf = sla.cho_factor(M)
            solveM = lambda r: sla.cho_solve(Mf, r)  # noqa: E731
        except np.linalg.LinAlgError:
            solveM = lambda r: np.linalg.lstsq(M, r, rcond=None)[0]  # noqa: E731

        XRdZinv = X @ Rd @ Zinv

        def direction(sigma_mu: float, dXa=None, dZa=None, dva=None, dwa=None):
            U = sigma_mu * Zinv - X + XRdZinv
            corr = np.zeros(p)
            if dXa is not None:
                U = U - dXa @ dZa @ Zinv
                corr = dva * dwa
            h = (sigma_mu - v * w - corr + v * rdlp) / w
            q = np.einsum("iab,ab->i", Amat, U) + G @ h - rp
            dy = solveM(q)
            dZ = np.tensordot(dy, Amat, axes=1) - Rd
            dX = U - X @ dZ @ Zinv
            dX = (dX + dX.T) / 2.0
            dw = G.T @ dy - rdlp
            dv = h - (v / w) * dw
            return dX, dv, dy, dZ, dw

        try:
            Lx = _chol_jitter(X)
        except np.linalg.LinAlgError:
            status = "numerical_breakdown"
            break

        # Predictor
        dXa, dva, dya, dZa, dwa = direction(0.0)
        ap = min(1.0, 0.99 * min(_max_step_psd(Lx, dXa), _max_step_pos(v, dva)))
        ad = min(1.0, 0.99 * min(_max_step_psd(Lz, dZa), _max_step_pos(w, dwa)))
        gap = np.sum(X * Z) + v @ w
        gap_aff = np.sum((X + ap * dXa) * (Z + ad * dZa)) + (v + ap * dva) @ (w + ad * dwa)
        sigma = min(1.0, max((gap_aff / gap) ** 3, 1e-10))

        # Corrector
        dX, dv, dy, dZ, dw = direction(sigma * mu, dXa, dZa, dva, dwa)
        ap = min(1.0, 0.98 * min(_max_step_psd(Lx, dX), _max_step_pos(v, dv)))
        ad = min(1.0, 0.98 * min(_max_step_psd(Lz, dZ), _max_step_pos(w, dw)))

        X = X + ap * dX
        v = v + ap * dv
        y = y + ad * dy
        Z = Z + ad * dZ
        w = w + ad * dw
        X = (X + X.T) / 2.0
        Z = (Z + Z.T) / 2.0

    _, (Xb, ub, yb, pobj, dobj, rel_gap, prim_res, dual_res) = best
    if status != "optimal" and rel_gap <= 1e-7 and prim_res <= 1e-6 and dual_res <= 1e-6:
        status = "optimal"
    return SdpResult(
        X=Xb,
        lp=ub,
        y=yb,
        primal_objective=pobj,
        dual_objective=dobj,
        rel_gap=rel_gap,
        primal_residual=prim_res,
        dual_residual=dual_res,
        iterations=it,
        status=status,
    )


def solve_sdp(instance: SdpInstance, max_iters: int = 200) -> SdpResult:
    """Solve the instance; complex Hermitian data goes through the real
    embedding H -> [[Re H, -Im H], [Im H, Re H]] / 2 (inner products match)."""
    m = len(instance.constraints)
    d = 0 if instance.lp_objective is None else len(instance.lp_objective)
    lp_c = np.zeros(d) if d == 0 else np.asarray(instance.lp_objective, dtype=float)
    lp_A = (
        np.zeros((m, 0))
        if d == 0
        else np.asarray(instance.lp_constraints, dtype=float).reshape(m, d)
    )

    if instance.is_complex:
        C = _real_embedding(instance.objective.astype(complex)) / 2.0
        A = [_real_embedding(a.astype(complex)) / 2.0 for a in instance.constraints]
    else:
        C = np.asarray(instance.objective, dtype=float)
        A = [np.asarray(a, dtype=float) for a in instance.constraints]

    # Row equilibration plus a variable scale keep the iterates well
    # conditioned when channel gains and power budgets differ by many orders
    # of magnitude.
    b = instance.bounds.copy()
    row_n = np.array([max(np.linalg.norm(a), 1e-300) for a in A])
    A = [a / nrm for a, nrm in zip(A, row_n)]
    b = b / row_n
    lp_As = lp_A / row_n[:, None] if d else lp_A
    # X = s_x * Xhat keeps the PSD block near unit scale; each auxiliary
    # scalar gets its own column scale so its coupling entries are O(1).
    s_x = max(1.0, float(np.max(np.abs(b))) if m else 1.0)
    b = b / s_x
    lp_As = lp_As / s_x
    if d:
        col = np.maximum(np.max(np.abs(lp_As), axis=0), 1e-300)
        lp_As = lp_As / col
        lp_c_eff = lp_c / col
    else:
        col = np.ones(0)
        lp_c_eff = lp_c
    obj_scale = max(
        np.linalg.norm(C) * s_x,
        np.max(np.abs(lp_c_eff)) if d else 0.0,
        1e-300,
    )
    Cs = C * (s_x / obj_scale)
    lp_cs = lp_c_eff / obj_scale

    res = _solve_real_sdp(Cs, A, b, lp_cs, lp_As, instance.tolerance, max_iters)

    X = res.X * s_x
    lp = res.lp / col if d else res.lp
    if instance.is_complex:
        n = instance.objective.shape[0]
        Xc = (X[:n, :n] + X[n:, n:]) / 2.0 + 1j * (X[n:, :n] - X[:n, n:]) / 2.0
        X = (Xc + Xc.conj().T) / 2.0
    y = res.y * (obj_scale / (row_n * s_x))
    return SdpResult(
        X=X,
        lp=lp,
        y=y,
        primal_objective=res.primal_objective * obj_scale,
        dual_objective=res.dual_objective * obj_scale,
        rel_gap=res.rel_gap,
        primal_residual=res.primal_residual,
        dual_residual=res.dual_residual,
        iterations=res.iterations,
        status=res.status,
    )


def rank1_extract(X: np.ndarray) -> tuple[float, np.ndarray]:
    """Top eigenpair (lam, q) with ||q|| = 1; lam q q^H is the closest rank-1
    PSD matrix in Frobenius norm."""
    X = np.asarray(X)
    Xh = (X + X.conj().T) / 2.0
    lam, vec = sla.eigh(Xh)
    return float(max(lam[-1], 0.0)), vec[:, -1]


# ---------------------------------------------------------------------------
# Bisection
# ---------------------------------------------------------------------------


@dataclass
class BisectionResult:
    t: float
    witness: object
    iterations: int
    feasible: bool


def bisection(feasible, t_min: float, t_max: float, eps: float) -> BisectionResult:
    """Bisect a monotone predicate: feasible(t) may return bool or
    (bool, witness).  Behavior is undefined for non-monotone predicates.
    Returns the last feasible t with |t_max - t_min| <= eps at exit."""
    if eps <= 0:
        raise ValueError("eps must be positive")

    def run(t):
        out = feasible(t)
        if isinstance(out, tuple):
            return out
        return bool(out), None

    ok, wit = run(t_min)
    if not ok:
        return BisectionResult(t=t_min, witness=None, iterations=0, feasible=False)
    lo, hi = float(t_min), float(t_max)
    it = 0
    while hi - lo > eps:
        mid = 0.5 * (lo + hi)
        ok, w = run(mid)
        if ok:
            lo, wit = mid, w
        else:
            hi = mid
        it += 1
    return BisectionResult(t=lo, witness=wit, iterations=it, feasible=True)


# ---------------------------------------------------------------------------
# Noise-weighted backscatter-energy maximization (alternating optimization)
# ---------------------------------------------------------------------------


@dataclass
class AoState:
    """Trace of one alternating-optimization run."""

    x: np.ndarray
    objective: float
    objective_trace: list = field(default_factory=list)
    surrogate_trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def _noise_diag(x, H_DL, H_BL, bits, delta):
    dli = np.abs(H_DL @ x) ** 2
    sig = delta * np.abs(H_BL @ x) ** 2
    return noise_variance(sig, dli, bits) + 1.0


def _weighted_objective(x, H_DL, H_BL, bits, delta) -> float:
    d = _noise_diag(x, H_DL, H_BL, bits, delta)
    return float(np.sum(np.abs(H_BL @ x) ** 2 / d))


def _quadratic_matrix(z, H_DL, H_BL, bits, delta) -> np.ndarray:
    w = np.abs(z) ** 2 / (3.0 * 4.0 ** np.asarray(bits, dtype=float))
    A = H_DL.conj().T @ (w[:, None] * H_DL) + delta * H_BL.conj().T @ (w[:, None] * H_BL)
    return (A + A.conj().T) / 2.0


def _power_constrained_update(A: np.ndarray, c: np.ndarray, p_max: float):
    """argmin x^H A x - 2 Re{c^H x} s.t. ||x||^2 <= P.

    KKT: x = (A + mu I)^{-1} c with mu >= 0; mu = 0 if the unconstrained
    minimizer already satisfies the power bound, otherwise mu solves
    ||x(mu)||^2 = P by bisection on a geometrically widened bracket.
    """
    lam, Q = sla.eigh(A)
    lam = np.maximum(lam, 0.0)
    ct = Q.conj().T @ c
    pwr2 = np.abs(ct) ** 2

    def norm2(mu):
        return float(np.sum(pwr2 / (lam + mu) ** 2))

    tiny = 1e-14 * max(lam[-1], 1.0)
    if lam[0] > tiny or np.all(pwr2[lam <= tiny] < (1e-14 * np.linalg.norm(c)) ** 2 + 1e-300):
        with np.errstate(divide="ignore", invalid="ignore"):
            x0 = np.where(lam > tiny, ct / np.where(lam > tiny, lam, 1.0), 0.0)
        if float(np.sum(np.abs(x0) ** 2)) <= p_max * (1 + 1e-12):
            return Q @ x0, 0.0

    hi = max(np.linalg.norm(c) / np.sqrt(p_max), 1e-300)
    while norm2(hi) > p_max:
        hi *= 2.0
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if norm2(mid) > p_max:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * hi:
            break
    mu = hi
    x = Q @ (ct / (lam + mu))
    # Newton polish on ||x(mu)||^2 = P for the tight tolerance
    for _ in range(5):
        f = norm2(mu) - p_max
        df = float(-2.0 * np.sum(pwr2 / (lam + mu) ** 3))
        if df == 0:
            break
        mu_new = mu - f / df
        if mu_new <= 0:
            break
        mu = mu_new
    x = Q @ (ct / (lam + mu))
    return x, mu


def project_per_antenna(x: np.ndarray, p_max: float) -> np.ndarray:
    """Element-wise radial projection onto {|x_c| <= sqrt(P)}."""
    x = np.asarray(x, dtype=complex)
    amp = np.abs(x)
    cap = np.sqrt(p_max)
    over = amp > cap
    out = x.copy()
    out[over] = x[over] / amp[over] * cap
    return out


def pgd_quadratic(
    A: np.ndarray,
    c: np.ndarray,
    p_max: float,
    x0: np.ndarray | None = None,
    tol: float = 1e-10,
    max_iters: int = 10_000,
) -> tuple[np.ndarray, dict]:
    """Projected gradient descent for min x^H A x - 2 Re{c^H x} with
    per-antenna bound |x_c|^2 <= P.  Step 1/(2 lam_max(A)); every iterate is
    feasible and the objective never increases."""
    n = c.size
    x = project_per_antenna(np.zeros(n, dtype=complex) if x0 is None else x0, p_max)
    lam_max = float(sla.eigvalsh(A)[-1]) if A.size else 0.0
    if lam_max <= 1e-300:
        # Linear objective: one projected step lands on the optimum.
        x = project_per_antenna(1e6 * np.sqrt(p_max) * c / max(np.linalg.norm(c), 1e-300), p_max)
        return x, {"iterations": 1, "kkt_residual": 0.0, "converged": True}
    eta = 1.0 / (2.0 * lam_max)

    def obj(xv):
        return float((xv.conj() @ (A @ xv)).real - 2.0 * (c.conj() @ xv).real)

    f = obj(x)
    scale = max(np.linalg.norm(c), lam_max * np.sqrt(p_max), 1e-300)
    res = np.inf
    it = 0
    max_violation = max(float(np.max(np.abs(x) ** 2)) - p_max, 0.0)
    objective_increase = 0.0
    for it in range(1, max_iters + 1):
        g = A @ x - c
        x_new = project_per_antenna(x - eta * g, p_max)
        res = np.linalg.norm(x_new - x) / (eta * scale)
        f_new = obj(x_new)
        max_violation = max(max_violation, float(np.max(np.abs(x_new) ** 2)) - p_max)
        objective_increase = max(objective_increase, f_new - f)
        x, f = x_new, f_new
        if res <= tol:
            break
    return x, {
        "iterations": it,
        "kkt_residual": float(res),
        "converged": res <= tol,
        "max_violation": max_violation,
        "max_objective_increase": objective_increase,
    }


def solve_p_d(
    H_BL: np.ndarray,
    H_DL: np.ndarray,
    bits,
    p_max: float,
    delta: float = 1.0,
    tol: float = 1e-9,
    max_outer: int = 300,
    x0: np.ndarray | None = None,
) -> AoState:
    """Maximize sum_r |h_bl_r^T x|^2 / d_r(x) under ||x||^2 <= P via the
    quadratic transform: alternate z = D^{-1} H_BL x with the closed-form
    power-constrained quadratic update."""
    bits = np.asarray(bits, dtype=int)
    n_c = H_BL.shape[1]
    if x0 is None:
        _, _, vh = np.linalg.svd(H_BL)
        x = np.sqrt(p_max) * vh[0].conj()
    else:
        x = np.asarray(x0, dtype=complex).copy()
    state = AoState(x=x, objective=_weighted_objective(x, H_DL, H_BL, bits, delta))
    state.objective_trace.append(state.objective)
    for it in range(1, max_outer + 1):
        d = _noise_diag(x, H_DL, H_BL, bits, delta)
        z = (H_BL @ x) / d
        A = _quadratic_matrix(z, H_DL, H_BL, bits, delta)
        c = H_BL.conj().T @ z
        const = float(np.sum(np.abs(z) ** 2 * (1.0 / (3.0 * 4.0 ** bits.astype(float)) + 1.0)))

        def surrogate(xv):
            quad = float((xv.conj() @ (A @ xv)).real)
            return 2.0 * (z.conj() @ (H_BL @ xv)).real.item() - quad - const

        s_before = surrogate(x)
        x_new, mu = _power_constrained_update(A, c, p_max)
        s_after = surrogate(x_new)
        state.surrogate_trace.append((s_before, s_after))
        x = x_new
        obj = _weighted_objective(x, H_DL, H_BL, bits, delta)
        state.objective_trace.append(obj)
        state.iterations = it
        if abs(obj - state.objective) <= tol * max(1.0, abs(obj)):
            state.objective = obj
            state.converged = True
            break
        state.objective = obj
    state.x = x
    return state


def solve_p_d_prime(
    H_BL: np.ndarray,
    H_DL: np.ndarray,
    bits,
    p_max: float,
    delta: float = 1.0,
    tol: float = 1e-9,
    max_outer: int = 300,
    pgd_tol: float = 1e-10,
    pgd_max_iters: int = 10_000,
    x0: np.ndarray | None = None,
) -> AoState:
    """Per-antenna variant: the inner quadratic subproblem is solved by
    projected gradient descent, so every iterate satisfies |x_c|^2 <= P."""
    bits = np.asarray(bits, dtype=int)
    n_c = H_BL.shape[1]
    if x0 is None:
        _, _, vh = np.linalg.svd(H_BL)
        v = vh[0].conj()
        phases = np.where(np.abs(v) > 1e-15, v / np.maximum(np.abs(v), 1e-300), 0.0)
        x = np.sqrt(p_max) * phases
    else:
        x = project_per_antenna(np.asarray(x0, dtype=complex), p_max)
    state = AoState(x=x, objective=_weighted_objective(x, H_DL, H_BL, bits, delta))
    state.objective_trace.append(state.objective)
    for it in range(1, max_outer + 1):
        d = _noise_diag(x, H_DL, H_BL, bits, delta)
        z = (H_BL @ x) / d
        A = _quadratic_matrix(z, H_DL, H_BL, bits, delta)
        c = H_BL.conj().T @ z
        const = float(np.sum(np.abs(z) ** 2 * (1.0 / (3.0 * 4.0 ** bits.astype(float)) + 1.0)))

        def surrogate(xv):
            quad = float((xv.conj() @ (A @ xv)).real)
            return 2.0 * (z.conj() @ (H_BL @ xv)).real.item() - quad - const

        s_before = surrogate(x)
        x_new, info = pgd_quadratic(A, c, p_max, x0=x, tol=pgd_tol, max_iters=pgd_max_iters)
        s_after = surrogate(x_new)
        state.surrogate_trace.append((s_before, s_after))
        x = x_new
        obj = _weighted_objective(x, H_DL, H_BL, bits, delta)
        state.objective_trace.append(obj)
        state.iterations = it
        if abs(obj - state.objective) <= tol * max(1.0, abs(obj)):
            state.objective = obj
            state.converged = True
            break
        state.objective = obj
    state.x = x
    return state
