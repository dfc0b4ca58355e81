"""Transmit beamformer design for a fixed AP partition.

Seven formulations of maximizing the received backscatter energy
||H_BL x||^2 (or the minimum per-device SINR), under a total or per-antenna
power budget and, optionally, a per-reader-antenna interference-to-signal
bound or an exact direct-link zero-forcing constraint:

  p_bf          total power, unconstrained interference: scaled MRT
  p_bf_prime    per-antenna power: per-antenna phase alignment
  p_dli         total power, |h_dl_r x|^2 / |h_bl_r x|^2 <= alpha:
                semidefinite relaxation + rank-1 extraction
  p_dli_prime   per-antenna power variant of p_dli
  p_alpha0      total power, H_DL' x = 0: nullspace projection, closed form
  p_alpha0_prime_convex   per-antenna power, H_DL' x = 0: convex program
                solved by projected ascent with Dykstra projections
  p_alpha0_prime_closed   sub-optimal closed form (nullspace solution
                rescaled to the per-antenna budget)
  p_multi       max-min SINR over devices in the nullspace: bisection with
                SDR feasibility checks

Every returned vector is canonicalized (first significant entry made real
positive) and re-verified for feasibility post hoc.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from bibc.scene import ChannelSet
from bibc.solvers import SdpInstance, bisection, rank1_extract, solve_sdp

PROBLEM_KINDS = (
    "p_bf",
    "p_bf_prime",
    "p_dli",
    "p_dli_prime",
    "p_alpha0",
    "p_alpha0_prime_convex",
    "p_alpha0_prime_closed",
    "p_multi",
    "p_d",
    "p_d_prime",
)

PER_ANTENNA_KINDS = {
    "p_bf_prime",
    "p_dli_prime",
    "p_alpha0_prime_convex",
    "p_alpha0_prime_closed",
    "p_d_prime",
}

# Nullspace-constrained problems get a finite comparison threshold when the
# interference metric is checked (exact zero-forcing cannot be compared in dB).
ALPHA_COMPARE_NULL_DB = -100.0
ALPHA_COMPARE_MARGIN_DB = 0.5


@dataclass
class BfProblemSpec:
    kind: str
    p_max: float
    alpha: float | None = None          # linear interference-to-signal bound
    delta: np.ndarray | float = 1.0     # per-device reflection power(s)
    bisect_tol: float = 1e-4            # on the SINR t for p_multi
    sdp_tol: float = 1e-9

    def __post_init__(self) -> None:
        if self.kind not in PROBLEM_KINDS:
            raise ValueError(f"unknown problem kind {self.kind!r}")
        if self.p_max <= 0:
            raise ValueError("p_max must be positive")
        if self.alpha is not None and self.alpha < 0:
            raise ValueError("alpha must be nonnegative")

    @property
    def per_antenna(self) -> bool:
        return self.kind in PER_ANTENNA_KINDS


@dataclass
class BeamformerSolution:
    x: np.ndarray
    objective: float                    # ||H_BL x||^2, or min-SINR for p_multi
    dli_metric: float                   # C(S); 0 when reader set is only the ref AP
    per_antenna_power: np.ndarray
    feasible: bool
    diagnostics: dict = field(default_factory=dict)

    @property
    def total_power(self) -> float:
        return float(np.sum(self.per_antenna_power))

    @property
    def objective_db(self) -> float:
        return 10.0 * np.log10(max(self.objective, 1e-300))

    @property
    def dli_metric_db(self) -> float:
        return 10.0 * np.log10(max(self.dli_metric, 1e-300))


@dataclass
class NullspaceBasis:
    Z: np.ndarray                        # (N_C, N_C - r_dl), orthonormal columns
    rank: int                            # numerical rank of H_DL'

    @property
    def dim(self) -> int:
        return self.Z.shape[1]


def canonical_phase(x: np.ndarray) -> np.ndarray:
    """Rotate so the first entry with |x_c| > 1e-12 ||x|| is real positive."""
    x = np.asarray(x, dtype=complex)
    nrm = np.linalg.norm(x)
    if nrm == 0:
        return x
    idx = np.flatnonzero(np.abs(x) > 1e-12 * nrm)
    if idx.size == 0:
        return x
    return x * np.exp(-1j * np.angle(x[idx[0]]))


def dli_metric(x, H_DL: np.ndarray, H_BL: np.ndarray, ref_rows) -> float:
    """Worst interference-to-backscatter power ratio over non-reference
    reader antennas; 0 when there are none, +inf on a dead backscatter row."""
    x = np.asarray(x)
    if float(np.vdot(x, x).real) <= 0:
        raise ValueError("beamforming vector must be nonzero")
    ref_rows = np.asarray(ref_rows, dtype=int)
    keep = np.setdiff1d(np.arange(H_DL.shape[0]), ref_rows)
    if keep.size == 0:
        return 0.0
    num = np.abs(H_DL[keep] @ x) ** 2
    den = np.abs(H_BL[keep] @ x) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(den > 0, num / np.maximum(den, 1e-300), np.inf)
    ratio = np.where((den == 0) & (num == 0), np.inf, ratio)
    return float(np.max(ratio))


def _objective(x, H_BL) -> float:
    return float(np.sum(np.abs(H_BL @ x) ** 2))


def _finish(
    x: np.ndarray,
    H_BL: np.ndarray,
    H_DL: np.ndarray,
    ref_rows,
    spec: BfProblemSpec,
    diagnostics: dict,
    objective: float | None = None,
) -> BeamformerSolution:
    """Canonicalize, then re-verify power and interference feasibility."""
    x = canonical_phase(x)
    pa = np.abs(x) ** 2
    tol = 1.0 + 1e-9
    if spec.per_antenna:
        power_ok = bool(np.max(pa, initial=0.0) <= spec.p_max * tol)
    else:
        power_ok = bool(np.sum(pa) <= spec.p_max * tol)
    c_s = dli_metric(x, H_DL, H_BL, ref_rows) if np.linalg.norm(x) > 0 else np.inf
    if spec.kind in ("p_dli", "p_dli_prime"):
        margin = 10.0 ** (ALPHA_COMPARE_MARGIN_DB / 10.0)
        dli_ok = c_s <= max(spec.alpha, 1e-300) * margin
    elif spec.kind in ("p_alpha0", "p_alpha0_prime_convex", "p_alpha0_prime_closed", "p_multi"):
        dli_ok = c_s <= 10.0 ** (ALPHA_COMPARE_NULL_DB / 10.0)
    else:
        dli_ok = True
    diagnostics = dict(diagnostics)
    diagnostics["power_ok"] = power_ok
    diagnostics["dli_ok"] = dli_ok
    return BeamformerSolution(
        x=x,
        objective=_objective(x, H_BL) if objective is None else objective,
        dli_metric=c_s,
        per_antenna_power=pa,
        feasible=power_ok and dli_ok,
        diagnostics=diagnostics,
    )


def solve_p_bf(h_c: np.ndarray, h_r: np.ndarray, p_max: float) -> BeamformerSolution:
    """Maximum ratio transmission: x = sqrt(P) h_c^* / ||h_c||."""
    h_c = np.asarray(h_c)
    if np.linalg.norm(h_c) == 0:
        raise ValueError("forward channel is zero")
    x = np.sqrt(p_max) * h_c.conj() / np.linalg.norm(h_c)
    H_BL = np.outer(h_r, h_c)
    spec = BfProblemSpec(kind="p_bf", p_max=p_max)
    return _finish(x, H_BL, np.zeros((0, h_c.size)), np.array([], dtype=int), spec, {})


def solve_p_bf_prime(h_c: np.ndarray, h_r: np.ndarray, p_max: float) -> BeamformerSolution:
    """Per-antenna phase alignment: x_c = sqrt(P) h_{c}^* / |h_{c}|.

    Zero channel entries get x_c = 0 (they contribute nothing to the
    objective and transmitting on them would only waste power)."""
    h_c = np.asarray(h_c)
    amp = np.abs(h_c)
    x = np.zeros_like(h_c, dtype=complex)
    nz = amp > 0
    x[nz] = np.sqrt(p_max) * h_c[nz].conj() / amp[nz]
    H_BL = np.outer(h_r, h_c)
    spec = BfProblemSpec(kind="p_bf_prime", p_max=p_max)
    return _finish(x, H_BL, np.zeros((0, h_c.size)), np.array([], dtype=int), spec, {})


def nullspace_basis(H_DL_prime: np.ndarray, rank_rtol: float = 1e-10) -> NullspaceBasis:
    """Orthonormal basis of the kernel of H_DL' from its SVD; singular values
    below rank_rtol times the largest count as zero."""
    H = np.atleast_2d(np.asarray(H_DL_prime))
    n_c = H.shape[1]
    if H.shape[0] == 0 or np.linalg.norm(H) == 0:
        return NullspaceBasis(Z=np.eye(n_c, dtype=complex), rank=0)
    _, s, vh = np.linalg.svd(H)
    rank = int(np.sum(s > rank_rtol * s[0]))
    Z = vh[rank:].conj().T
    return NullspaceBasis(Z=Z.astype(complex), rank=rank)


def solve_p_alpha0(
    channels_or_mats,
    p_max: float,
    basis: NullspaceBasis | None = None,
) -> BeamformerSolution:
    """Zero-forcing closed form: x = sqrt(P) Z v_Z with v_Z the top right
    singular vector of H_BL Z; cross-checked against the projection form
    sqrt(P) Z Z^H h_c^* / ||Z^H h_c^*||."""
    h_c, h_r, H_DL, ref_rows = _unpack(channels_or_mats)
    H_BL = np.outer(h_r, h_c)
    if basis is None:
        basis = nullspace_basis(_prime(H_DL, ref_rows))
    spec = BfProblemSpec(kind="p_alpha0", p_max=p_max)
    if basis.dim == 0:
        return BeamformerSolution(
            x=np.zeros(h_c.size, dtype=complex),
            objective=0.0,
            dli_metric=np.inf,
            per_antenna_power=np.zeros(h_c.size),
            feasible=False,
            diagnostics={"status": "empty_nullspace"},
        )
    Z = basis.Z
    proj = Z.conj().T @ h_c.conj()
    diagnostics = {"nullspace_dim": basis.dim, "rank_dl": basis.rank}
    if np.linalg.norm(proj) < 1e-15 * max(np.linalg.norm(h_c), 1e-300):
        diagnostics["status"] = "degenerate_projection"
        x = np.zeros(h_c.size, dtype=complex)
        return BeamformerSolution(
            x=x,
            objective=0.0,
            dli_metric=np.inf,
            per_antenna_power=np.abs(x) ** 2,
            feasible=False,
            diagnostics=diagnostics,
        )
    # SVD form
    _, _, vh = np.linalg.svd(H_BL @ Z)
    v_z = vh[0].conj()
    x_svd = np.sqrt(p_max) * Z @ v_z
    # projection form
    x_proj = np.sqrt(p_max) * Z @ (proj / np.linalg.norm(proj))
    mismatch = np.linalg.norm(canonical_phase(x_svd) - canonical_phase(x_proj))
    diagnostics["form_mismatch"] = float(mismatch / max(np.linalg.norm(x_svd), 1e-300))
    H_DL_p = _prime(H_DL, ref_rows)
    if H_DL_p.size:
        diagnostics["nullspace_residual"] = float(
            np.linalg.norm(H_DL_p @ x_svd)
            / max(np.linalg.norm(H_DL_p) * np.linalg.norm(x_svd), 1e-300)
        )
    else:
        diagnostics["nullspace_residual"] = 0.0
    return _finish(x_svd, H_BL, H_DL, ref_rows, spec, diagnostics)


def solve_p_alpha0_prime_closed(
    channels_or_mats,
    p_max: float,
    basis: NullspaceBasis | None = None,
) -> BeamformerSolution:
    """Nullspace closed form rescaled so max_c |x_c| = sqrt(P)."""
    h_c, h_r, H_DL, ref_rows = _unpack(channels_or_mats)
    H_BL = np.outer(h_r, h_c)
    if basis is None:
        basis = nullspace_basis(_prime(H_DL, ref_rows))
    base = solve_p_alpha0((h_c, h_r, H_DL, ref_rows), p_max=1.0, basis=basis)
    spec = BfProblemSpec(kind="p_alpha0_prime_closed", p_max=p_max)
    if not base.feasible and base.objective == 0.0:
        return BeamformerSolution(
            x=base.x,
            objective=0.0,
            dli_metric=np.inf,
            per_antenna_power=np.abs(base.x) ** 2,
            feasible=False,
            diagnostics=dict(base.diagnostics),
        )
    zv = base.x  # unit-power nullspace direction
    q_max = np.max(np.abs(zv))
    x = np.sqrt(p_max) * zv / q_max
    return _finish(x, H_BL, H_DL, ref_rows, spec, dict(base.diagnostics))


def _dykstra_project(
    x0: np.ndarray, Z: np.ndarray, p_max: float, tol: float = 1e-12, max_iters: int = 500
) -> np.ndarray:
    """Projection onto {x in range(Z) : |x_c| <= sqrt(P)} by Dykstra's
    alternating corrections between the subspace and the per-antenna balls."""
    cap = np.sqrt(p_max)
    y = x0.copy()
    p = np.zeros_like(x0)
    q = np.zeros_like(x0)
    prev = y
    for _ in range(max_iters):
        u = Z @ (Z.conj().T @ (y + p))
        p = y + p - u
        t = u + q
        amp = np.abs(t)
        y = np.where(amp > cap, t / np.maximum(amp, 1e-300) * cap, t)
        q = t - y
        if np.linalg.norm(y - prev) <= tol * max(1.0, np.linalg.norm(y)):
            break
        prev = y
    # final pass through the subspace so the output is exactly in range(Z)
    return Z @ (Z.conj().T @ y)


def solve_p_alpha0_prime_convex(
    channels_or_mats,
    p_max: float,
    basis: NullspaceBasis | None = None,
    kkt_tol: float = 1e-7,
    max_iters: int = 10_000,
) -> BeamformerSolution:
    """Per-antenna zero-forcing optimum: maximize Re{v_BL^H x} over
    {H_DL' x = 0, |x_c|^2 <= P} by projected gradient ascent, with the exact
    projection onto the intersection computed by Dykstra's algorithm."""
    h_c, h_r, H_DL, ref_rows = _unpack(channels_or_mats)
    H_BL = np.outer(h_r, h_c)
    if basis is None:
        basis = nullspace_basis(_prime(H_DL, ref_rows))
    spec = BfProblemSpec(kind="p_alpha0_prime_convex", p_max=p_max)
    if basis.dim == 0 or np.linalg.norm(h_c) == 0:
        return BeamformerSolution(
            x=np.zeros(h_c.size, dtype=complex),
            objective=0.0,
            dli_metric=np.inf,
            per_antenna_power=np.zeros(h_c.size),
            feasible=False,
            diagnostics={"status": "empty_nullspace"},
        )
    Z = basis.Z
    v = h_c.conj() / np.linalg.norm(h_c)     # top right singular vector of H_BL
    # warm start from the closed form
    start = solve_p_alpha0_prime_closed((h_c, h_r, H_DL, ref_rows), p_max, basis=basis)
    x = start.x.astype(complex)
    eta = np.sqrt(p_max) * np.sqrt(h_c.size)
    res = np.inf
    it = 0
    for it in range(1, max_iters + 1):
        x_new = _dykstra_project(x + eta * v, Z, p_max)
        res = np.linalg.norm(x_new - x) / eta
        x = x_new
        if res <= kkt_tol:
            break
    # the Dykstra output can overshoot the antenna caps by its own tolerance;
    # a uniform shrink stays in the subspace and restores exact feasibility
    cap = np.max(np.abs(x))
    if cap > np.sqrt(p_max):
        x = x * (np.sqrt(p_max) / cap)
    diagnostics = {
        "iterations": it,
        "kkt_residual": float(res),
        "converged": res <= kkt_tol,
        "nullspace_dim": basis.dim,
    }
    H_DL_p = _prime(H_DL, ref_rows)
    if H_DL_p.size:
        diagnostics["nullspace_residual"] = float(
            np.linalg.norm(H_DL_p @ x)
            / max(np.linalg.norm(H_DL_p) * np.linalg.norm(x), 1e-300)
        )
    else:
        diagnostics["nullspace_residual"] = 0.0
    return _finish(x, H_BL, H_DL, ref_rows, spec, diagnostics)


def solve_p_dli(
    channels_or_mats,
    alpha: float,
    p_max: float,
    per_antenna: bool = False,
    sdp_tol: float = 1e-9,
) -> BeamformerSolution:
    """Interference-bounded energy maximization by semidefinite relaxation.

    Lifts X = x x^H, drops the rank-1 constraint, solves the SDP, and scales
    the dominant eigenvector to the power budget.  The extracted vector can
    violate the per-antenna ratio constraints; feasibility is re-verified
    and the relaxed optimum is reported alongside."""
    h_c, h_r, H_DL, ref_rows = _unpack(channels_or_mats)
    H_BL = np.outer(h_r, h_c)
    n_c = h_c.size
    keep = np.setdiff1d(np.arange(H_DL.shape[0]), np.asarray(ref_rows, dtype=int))
    G_BL = H_BL.conj().T @ H_BL
    cons = []
    bounds = []
    for r in keep:
        g_dl = np.outer(H_DL[r].conj(), H_DL[r])
        g_bl = np.outer(H_BL[r].conj(), H_BL[r])
        cons.append(g_dl - alpha * g_bl)
        bounds.append(0.0)
    if per_antenna:
        for c in range(n_c):
            e = np.zeros((n_c, n_c), dtype=complex)
            e[c, c] = 1.0
            cons.append(e)
            bounds.append(p_max)
    else:
        cons.append(np.eye(n_c, dtype=complex))
        bounds.append(p_max)
    inst = SdpInstance(
        objective=G_BL, constraints=cons, bounds=np.asarray(bounds), tolerance=sdp_tol
    )
    res = solve_sdp(inst)
    kind = "p_dli_prime" if per_antenna else "p_dli"
    spec = BfProblemSpec(kind=kind, p_max=p_max, alpha=alpha)
    lam, q = rank1_extract(res.X)
    if lam <= 0:
        x = np.zeros(n_c, dtype=complex)
    else:
        x = np.sqrt(p_max) * q
    eigs = np.maximum(np.linalg.eigvalsh((res.X + res.X.conj().T) / 2.0), 0.0)
    rank1_gap = float(np.sqrt(np.sum(eigs[:-1] ** 2)) / max(eigs[-1], 1e-300))
    diagnostics = {
        "sdp_status": res.status,
        "sdp_rel_gap": res.rel_gap,
        "sdp_iterations": res.iterations,
        "relaxed_objective": res.primal_objective,
        "rank1_gap": rank1_gap,
    }
    sol = _finish(x, H_BL, H_DL, ref_rows, spec, diagnostics)
    if res.status not in ("optimal",):
        sol.feasible = False
        sol.diagnostics["status"] = res.status
    return sol


def build_multi_matrices(
    h_c_all: np.ndarray,
    h_r_all: np.ndarray,
    H_DL: np.ndarray,
    Z: np.ndarray,
    delta,
) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Per-device quadratic forms in the nullspace coordinates b (x = Z b):

      b^H A_k b = delta_k ||h_r^k||^4 |h_c^k^T Z b|^2     (signal)
      b^H B_k b = |h_r^k^H H_DL Z b|^2                    (direct link)
      b^H C_k b = sum_{k'!=k} delta_k' |h_r^k^H H_BL^k' Z b|^2  (cross)
    """
    K = h_c_all.shape[0]
    delta = np.broadcast_to(np.asarray(delta, dtype=float), (K,))
    out = []
    for k in range(K):
        h_c = h_c_all[k]
        h_r = h_r_all[k]
        # |h_c^T Z b| = |u^H b| with u = Z^H h_c^*, so A = delta ||h_r||^4 u u^H
        u = Z.conj().T @ h_c.conj()
        A = delta[k] * (np.linalg.norm(h_r) ** 4) * np.outer(u, u.conj())
        w = Z.conj().T @ (H_DL.conj().T @ h_r)
        B = np.outer(w, w.conj())
        C = np.zeros_like(B)
        for kp in range(K):
            if kp == k:
                continue
            hbl = np.outer(h_r_all[kp], h_c_all[kp])
            wk = Z.conj().T @ (hbl.conj().T @ h_r)
            C = C + delta[kp] * np.outer(wk, wk.conj())
        out.append(
            (
                (A + A.conj().T) / 2.0,
                (B + B.conj().T) / 2.0,
                (C + C.conj().T) / 2.0,
            )
        )
    return out


def sinr_per_device(x, h_c_all, h_r_all, H_DL, delta) -> np.ndarray:
    """Per-device SINR with matched-filter combining u_k = h_r^k."""
    K = h_c_all.shape[0]
    delta = np.broadcast_to(np.asarray(delta, dtype=float), (K,))
    out = np.empty(K)
    for k in range(K):
        u = h_r_all[k]
        sig = delta[k] * np.abs(u.conj() @ (np.outer(h_r_all[k], h_c_all[k]) @ x)) ** 2
        dli = np.abs(u.conj() @ (H_DL @ x)) ** 2
        cross = 0.0
        for kp in range(K):
            if kp == k:
                continue
            cross += delta[kp] * np.abs(u.conj() @ (np.outer(h_r_all[kp], h_c_all[kp]) @ x)) ** 2
        out[k] = sig / (dli + cross + np.linalg.norm(u) ** 2)
    return out


def solve_p_multi(
    channels: ChannelSet,
    p_max: float,
    delta=1.0,
    bisect_tol_rel: float = 1e-4,
    sdp_tol: float = 1e-9,
) -> BeamformerSolution:
    """Max-min SINR across devices with x restricted to the direct-link
    nullspace: bisection on the SINR target, each feasibility check solved
    as a ratio-margin SDP in the lifted nullspace coordinates."""
    basis = nullspace_basis(channels.H_DL_prime)
    h_c_all, h_r_all, H_DL = channels.h_c_all, channels.h_r_all, channels.H_DL
    K = channels.n_bdes
    delta = np.broadcast_to(np.asarray(delta, dtype=float), (K,))
    spec = BfProblemSpec(kind="p_multi", p_max=p_max, delta=delta)
    if basis.dim == 0:
        return BeamformerSolution(
            x=np.zeros(channels.n_c, dtype=complex),
            objective=0.0,
            dli_metric=np.inf,
            per_antenna_power=np.zeros(channels.n_c),
            feasible=False,
            diagnostics={"status": "empty_nullspace"},
        )
    Z = basis.Z
    mats = build_multi_matrices(h_c_all, h_r_all, H_DL, Z, delta)
    noise = np.array([np.linalg.norm(h_r_all[k]) ** 2 for k in range(K)])
    # noise-floor SINR bound with the beam already projected into the nullspace
    t_max = float(
        min(
            delta[k]
            * p_max
            * np.linalg.norm(h_r_all[k]) ** 2
            * np.linalg.norm(Z.conj().T @ h_c_all[k].conj()) ** 2
            for k in range(K)
        )
    )
    if t_max <= 0:
        return BeamformerSolution(
            x=np.zeros(channels.n_c, dtype=complex),
            objective=0.0,
            dli_metric=np.inf,
            per_antenna_power=np.zeros(channels.n_c),
            feasible=False,
            diagnostics={"status": "degenerate_projection"},
        )
    nz = Z.shape[1]

    def feasible(t):
        # max a s.t. tr(M_k B) >= a * noise_k * t, tr(B) <= P; feasible iff a >= 1
        cons = [np.eye(nz, dtype=complex)]
        bounds = [p_max]
        lp_rows = [[0.0]]
        for k in range(K):
            A_k, B_k, C_k = mats[k]
            M_k = A_k - t * (B_k + C_k)
            cons.append(-M_k)
            bounds.append(0.0)
            lp_rows.append([noise[k] * t])
        inst = SdpInstance(
            objective=np.zeros((nz, nz), dtype=complex),
            constraints=cons,
            bounds=np.asarray(bounds),
            lp_objective=np.array([1.0]),
            lp_constraints=np.asarray(lp_rows),
            tolerance=sdp_tol,
        )
        res = solve_sdp(inst)
        ok = res.status == "optimal" and res.lp[0] >= 1.0 - 1e-7
        return ok, res.X if ok else None

    eps = bisect_tol_rel * t_max
    result = bisection(lambda t: feasible(t) if t > 0 else (True, None), 0.0, t_max, eps)
    if result.witness is None:
        # no strictly positive SINR target was feasible
        x = np.zeros(channels.n_c, dtype=complex)
        return BeamformerSolution(
            x=x,
            objective=0.0,
            dli_metric=np.inf,
            per_antenna_power=np.abs(x) ** 2,
            feasible=False,
            diagnostics={"status": "bisection_infeasible", "t_max": t_max},
        )
    lam, q = rank1_extract(result.witness)
    b = np.sqrt(p_max) * q
    x = Z @ b
    sinrs = sinr_per_device(x, h_c_all, h_r_all, H_DL, delta)
    diagnostics = {
        "t_bisect": result.t,
        "bisect_iterations": result.iterations,
        "bisect_eps": eps,
        "sinr_per_device": sinrs,
        "nullspace_dim": basis.dim,
    }
    sol = _finish(
        x, channels.H_BL, H_DL, channels.ref_rows, spec, diagnostics,
        objective=float(np.min(sinrs)),
    )
    return sol


def _prime(H_DL: np.ndarray, ref_rows) -> np.ndarray:
    keep = np.setdiff1d(np.arange(H_DL.shape[0]), np.asarray(ref_rows, dtype=int))
    return H_DL[keep, :]


def _unpack(channels_or_mats):
    """Accept a ChannelSet or an explicit (h_c, h_r, H_DL, ref_rows) tuple."""
    if isinstance(channels_or_mats, ChannelSet):
        ch = channels_or_mats
        return ch.h_c, ch.h_r, ch.H_DL, ch.ref_rows
    h_c, h_r, H_DL, ref_rows = channels_or_mats
    return (
        np.asarray(h_c, dtype=complex),
        np.asarray(h_r, dtype=complex),
        np.asarray(H_DL, dtype=complex),
        np.asarray(ref_rows, dtype=int),
    )


def solve_problem(
    kind: str,
    channels: ChannelSet,
    p_max: float,
    alpha: float | None = None,
    delta=1.0,
    quantizer_bits=None,
    **kwargs,
) -> BeamformerSolution:
    """Dispatch a problem kind on an assembled channel set."""
    mats = (channels.h_c, channels.h_r, channels.H_DL, channels.ref_rows)
    if kind == "p_bf":
        sol = solve_p_bf(channels.h_c, channels.h_r, p_max)
        return _finish(
            sol.x, channels.H_BL, channels.H_DL, channels.ref_rows,
            BfProblemSpec(kind="p_bf", p_max=p_max), sol.diagnostics,
        )
    if kind == "p_bf_prime":
        sol = solve_p_bf_prime(channels.h_c, channels.h_r, p_max)
        return _finish(
            sol.x, channels.H_BL, channels.H_DL, channels.ref_rows,
            BfProblemSpec(kind="p_bf_prime", p_max=p_max), sol.diagnostics,
        )
    if kind == "p_dli":
        return solve_p_dli(mats, alpha=alpha if alpha is not None else 1.0, p_max=p_max, **kwargs)
    if kind == "p_dli_prime":
        return solve_p_dli(
            mats, alpha=alpha if alpha is not None else 1.0, p_max=p_max, per_antenna=True, **kwargs
        )
    if kind == "p_alpha0":
        return solve_p_alpha0(mats, p_max, **kwargs)
    if kind == "p_alpha0_prime_convex":
        return solve_p_alpha0_prime_convex(mats, p_max, **kwargs)
    if kind == "p_alpha0_prime_closed":
        return solve_p_alpha0_prime_closed(mats, p_max, **kwargs)
    if kind == "p_multi":
        return solve_p_multi(channels, p_max, delta=delta, **kwargs)
    if kind in ("p_d", "p_d_prime"):
        from bibc.solvers import solve_p_d, solve_p_d_prime

        if quantizer_bits is None:
            raise ValueError(f"{kind} needs per-antenna quantizer bits")
        fn = solve_p_d if kind == "p_d" else solve_p_d_prime
        state = fn(channels.H_BL, channels.H_DL, quantizer_bits, p_max, delta=float(np.max(delta)), **kwargs)
        spec = BfProblemSpec(kind=kind, p_max=p_max)
        return _finish(
            state.x, channels.H_BL, channels.H_DL, channels.ref_rows, spec,
            {"iterations": state.iterations, "converged": state.converged,
             "weighted_objective": state.objective},
        )
    raise ValueError(f"unknown problem kind {kind!r}")
