"""Backscatter channel estimation from pilot round trips.

Every AP in turn transmits an orthogonal pilot matrix Phi_l (Phi_l Phi_l^H =
alpha_l I, alpha_l = P_max tau_l / M_l) repeated over J' slots with known
reflection coefficients gamma_j'; the reference AP receives

    Y_{l,j'} = gamma_j' h_ref h_l^T Phi_l + W_{l,j'} .

The estimator proceeds in four steps: (1) least-squares estimate of the
reference cascade h_ref h_ref^T and eigen-extraction of h_ref (up to a sign),
(2) per-AP cascade estimates projected through h_ref, (3) gradient-descent
refinement of h_ref on the pooled normalized observations
Z_{l,j'} = Y_{l,j'} Phi_l^H / (gamma_j' alpha_l), and (4) alternation of
steps 2-3 until the reference estimate stops moving.  Multiple devices with
mutually orthogonal gamma sequences are estimated by re-running the same
pipeline per device.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.linalg import hadamard

from bibc.rng import complex_normal


@dataclass
class PilotSpec:
    """Orthogonal pilots per AP plus the reflection-coefficient schedule.

    `gamma` has shape (J',) for a single device or (J', K) with mutually
    orthogonal columns for K devices.
    """

    phi: dict[int, np.ndarray]
    alpha: dict[int, float]
    gamma: np.ndarray

    def __post_init__(self) -> None:
        self.gamma = np.asarray(self.gamma, dtype=complex)
        if np.any(np.abs(self.gamma) == 0):
            raise ValueError("reflection coefficients must be nonzero")
        for ap_id, phi in self.phi.items():
            m = phi.shape[0]
            gram = phi @ phi.conj().T
            if np.linalg.norm(gram - self.alpha[ap_id] * np.eye(m)) > 1e-10 * self.alpha[ap_id] * m:
                raise ValueError(f"pilot for AP {ap_id} is not orthogonal")

    @property
    def n_rounds(self) -> int:
        return self.gamma.shape[0]

    def gamma_for(self, bde: int = 0) -> np.ndarray:
        if self.gamma.ndim == 1:
            if bde != 0:
                raise IndexError("single-device gamma schedule")
            return self.gamma
        return self.gamma[:, bde]


@dataclass
class EstimationConfig:
    learning_rate: float = 100.0
    max_gd_iters: int = 100
    gd_tolerance: float = 1e-10       # on the gradient-difference norm, relative
    max_outer_iters: int = 4
    outer_tolerance: float | None = None  # default 1e-8 ||h_ref||^2 (scale-free)

    def __post_init__(self) -> None:
        if min(self.learning_rate, self.max_gd_iters, self.gd_tolerance) <= 0:
            raise ValueError("learning rate, iteration caps, and tolerances must be positive")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")


@dataclass
class EstimationResult:
    h_ref: np.ndarray
    h_ap: dict[int, np.ndarray]
    iterations: int
    objective: float
    objective_trace: list = field(default_factory=list)
    selected_iteration: int = 0
    diverged: bool = False


def _orthogonal_rows(m: int, tau: int) -> np.ndarray:
    """m constant-modulus orthogonal rows of length tau: Hadamard rows when
    tau is a power of two, DFT rows otherwise."""
    if tau & (tau - 1) == 0:
        return hadamard(tau)[:m].astype(complex)
    k = np.arange(tau)
    rows = np.exp(-2j * np.pi * np.outer(np.arange(m), k) / tau)
    return rows


def gen_pilots(
    ap_antennas: dict[int, int],
    tau: dict[int, int] | int | None,
    p_max: float,
    gamma: np.ndarray | None = None,
    n_rounds: int = 1,
    n_devices: int = 1,
) -> PilotSpec:
    """Builds pilots with Phi Phi^H = (P_max tau / M) I and per-symbol energy
    P_max; `tau` defaults to the per-AP antenna count (the minimum length)."""
    phi = {}
    alpha = {}
    for ap_id, m in ap_antennas.items():
        t = m if tau is None else (tau if isinstance(tau, int) else tau[ap_id])
        if t < m:
            raise ValueError(f"pilot length {t} shorter than {m} antennas (AP {ap_id})")
        a = p_max * t / m
        rows = _orthogonal_rows(m, t)
        phi[ap_id] = np.sqrt(p_max / m) * rows
        alpha[ap_id] = a
    if gamma is None:
        if n_devices > 1:
            order = 1
            while order < max(n_rounds, n_devices):
                order *= 2
            gamma = hadamard(order)[:, :n_devices].astype(complex)
        else:
            gamma = np.ones(n_rounds, dtype=complex)
    return PilotSpec(phi=phi, alpha=alpha, gamma=np.asarray(gamma, dtype=complex))


def rx_pilot(h_ref: np.ndarray, h_l: np.ndarray, phi: np.ndarray, gamma_j: complex, rng) -> np.ndarray:
    """One received pilot block: gamma h_ref h_l^T Phi + unit-variance noise."""
    signal = gamma_j * np.outer(h_ref, h_l) @ phi
    if rng is None:
        return signal
    return signal + complex_normal(rng, signal.shape)


def rx_all_pilots(
    h_ap_true: dict[int, np.ndarray],
    ref_id: int,
    pilots: PilotSpec,
    rng,
) -> dict[int, list[np.ndarray]]:
    """Observations for every AP and round; `h_ap_true[l]` is (K, M_l) and
    multiple devices superpose with their own gamma columns."""
    gamma = np.atleast_2d(pilots.gamma.T).T  # (J', K)
    K = gamma.shape[1]
    obs: dict[int, list[np.ndarray]] = {}
    for ap_id, phi in pilots.phi.items():
        ys = []
        for j in range(pilots.n_rounds):
            y = np.zeros((h_ap_true[ref_id].shape[1], phi.shape[1]), dtype=complex)
            for k in range(K):
                y += gamma[j, k] * np.outer(h_ap_true[ref_id][k], h_ap_true[ap_id][k]) @ phi
            if rng is not None:
                y = y + complex_normal(rng, y.shape)
            ys.append(y)
        obs[ap_id] = ys
    return obs


def ls_cascade(ys: list[np.ndarray], phi: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """Least-squares cascade estimate sum_j Y_j Phi^H (Phi Phi^H)^{-1} / (J' gamma_j)."""
    gram = phi @ phi.conj().T
    try:
        gram_inv = np.linalg.inv(gram)
    except np.linalg.LinAlgError as e:
        raise np.linalg.LinAlgError("pilot Gram matrix is singular") from e
    J = len(ys)
    out = np.zeros((ys[0].shape[0], phi.shape[0]), dtype=complex)
    for j, y in enumerate(ys):
        out += (y @ phi.conj().T @ gram_inv) / (J * gamma[j])
    return out


def ls_cascade_ref(ys: list[np.ndarray], phi: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    return ls_cascade(ys, phi, gamma)


def extract_href(H_ref_hat: np.ndarray) -> np.ndarray:
    """Recover h_ref (up to a common sign) from the cascade estimate.

    Builds the real symmetric matrix of the symmetrized cascade
    (H^H + H^*)/2 and scales its top eigenvector; a 1x1 cascade reduces to
    the closed-form square root sqrt(|H|) e^{j phase/2}.
    """
    H = np.atleast_2d(np.asarray(H_ref_hat, dtype=complex))
    m = H.shape[0]
    if H.shape != (m, m):
        raise ValueError("cascade estimate must be square")
    if m == 1:
        val = complex(H[0, 0])
        return np.array([np.sqrt(np.abs(val)) * np.exp(1j * np.angle(val) / 2.0)])
    Hb = (H.conj().T + H.conj()) / 2.0
    G = np.block(
        [
            [Hb.real, -Hb.imag],
            [-Hb.imag, -Hb.real],
        ]
    )
    G = (G + G.T) / 2.0
    lam, vec = sla.eigh(G)
    if lam[-1] <= 0:
        raise ValueError("cascade estimate has no positive spectral component")
    q = vec[:, -1]
    v = np.sqrt(lam[-1]) * q / np.linalg.norm(q)
    return v[:m] + 1j * v[m:]


def estimate_hl(
    ys: list[np.ndarray], phi: np.ndarray, gamma: np.ndarray, h_ref_hat: np.ndarray
) -> np.ndarray:
    """h_l estimate: project the cascade estimate through h_ref."""
    nrm2 = float(np.vdot(h_ref_hat, h_ref_hat).real)
    if nrm2 <= 0:
        raise ValueError("reference channel estimate is zero")
    cascade = ls_cascade(ys, phi, gamma)
    return (h_ref_hat.conj() @ cascade) / nrm2


def _z_matrices(obs, pilots: PilotSpec, ref_id: int, bde: int = 0):
    gamma = pilots.gamma_for(bde)
    z = {}
    for ap_id, ys in obs.items():
        z[ap_id] = [
            ys[j] @ pilots.phi[ap_id].conj().T / (gamma[j] * pilots.alpha[ap_id])
            for j in range(len(ys))
        ]
    return z


def gd_objective(h_ref: np.ndarray, z, h_ap_hat: dict[int, np.ndarray], ref_id: int) -> float:
    """Pooled normalized-observation objective
    sum ||Z_ref - h h^T||^2 + sum ||Z_l - h h_l^T||^2."""
    val = 0.0
    outer_ref = np.outer(h_ref, h_ref)
    for zj in z[ref_id]:
        val += float(np.linalg.norm(zj - outer_ref) ** 2)
    for ap_id, zl in z.items():
        if ap_id == ref_id:
            continue
        outer_l = np.outer(h_ref, h_ap_hat[ap_id])
        for zj in zl:
            val += float(np.linalg.norm(zj - outer_l) ** 2)
    return val


def gd_gradient(h_ref: np.ndarray, z, h_ap_hat: dict[int, np.ndarray], ref_id: int) -> np.ndarray:
    """Derivative of the pooled objective with respect to the unconjugated
    h_ref; descent steps subtract its conjugate."""
    g = np.zeros_like(h_ref)
    nrm2 = float(np.vdot(h_ref, h_ref).real)
    for zj in z[ref_id]:
        g = g + 2.0 * nrm2 * h_ref.conj() - (zj.conj() + zj.conj().T) @ h_ref
    for ap_id, zl in z.items():
        if ap_id == ref_id:
            continue
        hl = h_ap_hat[ap_id]
        hl2 = float(np.vdot(hl, hl).real)
        for zj in zl:
            g = g + hl2 * h_ref.conj() - zj.conj() @ hl
    return g


def refine_href(
    h_ref0: np.ndarray,
    z,
    h_ap_hat: dict[int, np.ndarray],
    ref_id: int,
    config: EstimationConfig,
) -> tuple[np.ndarray, dict]:
    """Gradient descent on the pooled objective, stopping when the gradient
    stops changing or after the iteration cap.  A divergence guard halves
    the step whenever the objective increases and the best iterate is
    returned."""
    h = h_ref0.copy()
    lr = config.learning_rate
    obj = gd_objective(h, z, h_ap_hat, ref_id)
    best_h, best_obj = h.copy(), obj
    g_prev = None
    g = gd_gradient(h, z, h_ap_hat, ref_id)
    tol = config.gd_tolerance * max(float(np.vdot(g, g).real), 1e-300)
    steps = 0
    halvings = 0
    for _ in range(config.max_gd_iters):
        h_new = h - lr * g.conj()
        obj_new = gd_objective(h_new, z, h_ap_hat, ref_id)
        steps += 1
        if obj_new > obj:
            lr *= 0.5
            halvings += 1
            if halvings > 60:
                break
            continue
        h, obj = h_new, obj_new
        if obj < best_obj:
            best_h, best_obj = h.copy(), obj
        g_prev, g = g, gd_gradient(h, z, h_ap_hat, ref_id)
        if g_prev is not None and float(np.vdot(g - g_prev, g - g_prev).real) < tol:
            break
    return best_h, {"steps": steps, "halvings": halvings, "objective": best_obj}


def ml_objective(h_ref, h_ap_hat, obs, pilots: PilotSpec, ref_id: int, bde: int = 0) -> float:
    """Raw pilot-domain objective sum_j ||Y - gamma h_ref h^T Phi||^2."""
    gamma = pilots.gamma_for(bde)
    val = 0.0
    for ap_id, ys in obs.items():
        h_l = h_ref if ap_id == ref_id else h_ap_hat[ap_id]
        model = np.outer(h_ref, h_l) @ pilots.phi[ap_id]
        for j, y in enumerate(ys):
            val += float(np.linalg.norm(y - gamma[j] * model) ** 2)
    return val


def estimate_single(
    obs: dict[int, list[np.ndarray]],
    pilots: PilotSpec,
    ref_id: int,
    config: EstimationConfig | None = None,
    bde: int = 0,
    iterate: bool = True,
) -> EstimationResult:
    """Full pipeline for one device; `iterate=False` stops after the initial
    reference extraction and per-AP projection."""
    config = config or EstimationConfig()
    gamma = pilots.gamma_for(bde)
    cascade_ref = ls_cascade(obs[ref_id], pilots.phi[ref_id], gamma)
    h_ref = extract_href(cascade_ref)
    other_ids = [i for i in obs if i != ref_id]

    def project_all(h):
        return {l: estimate_hl(obs[l], pilots.phi[l], gamma, h) for l in other_ids}

    h_ap = project_all(h_ref)
    f0 = ml_objective(h_ref, h_ap, obs, pilots, ref_id, bde)
    trace = [(h_ref.copy(), dict(h_ap), f0)]
    if not iterate or h_ref.size == 1:
        # a single-antenna reference has zero refinement gradient already
        return EstimationResult(
            h_ref=h_ref, h_ap=h_ap, iterations=0, objective=f0, objective_trace=[f0]
        )

    z = _z_matrices(obs, pilots, ref_id, bde)
    eps = (
        config.outer_tolerance
        if config.outer_tolerance is not None
        else 1e-8 * float(np.vdot(h_ref, h_ref).real)
    )
    hit_cap = False
    i = 0
    while True:
        i += 1
        h_ref_new, _ = refine_href(h_ref, z, h_ap, ref_id, config)
        h_ap = project_all(h_ref_new)
        f_i = ml_objective(h_ref_new, h_ap, obs, pilots, ref_id, bde)
        trace.append((h_ref_new.copy(), dict(h_ap), f_i))
        delta = float(np.vdot(h_ref_new - h_ref, h_ref_new - h_ref).real)
        h_ref = h_ref_new
        if delta < eps:
            break
        if i == config.max_outer_iters:
            hit_cap = True
            break
    objectives = [t[2] for t in trace]
    if hit_cap:
        sel = int(np.argmin(objectives))
    else:
        sel = len(trace) - 1
    h_ref_out, h_ap_out, f_out = trace[sel]
    return EstimationResult(
        h_ref=h_ref_out,
        h_ap=h_ap_out,
        iterations=i,
        objective=f_out,
        objective_trace=objectives,
        selected_iteration=sel,
        diverged=hit_cap and sel == 0,
    )


def estimate_all(
    obs: dict[int, list[np.ndarray]],
    pilots: PilotSpec,
    ref_id: int,
    config: EstimationConfig | None = None,
    iterate: bool = True,
) -> list[EstimationResult]:
    """Run the pipeline once per device (orthogonal gamma columns separate
    the superimposed reflections)."""
    n_dev = 1 if pilots.gamma.ndim == 1 else pilots.gamma.shape[1]
    return [
        estimate_single(obs, pilots, ref_id, config, bde=k, iterate=iterate)
        for k in range(n_dev)
    ]


def nmse(h_true: np.ndarray, h_hat: np.ndarray) -> float:
    """Normalized error min over the unresolvable sign:
    min_{theta in {0, pi}} ||h - e^{j theta} h_hat||^2 / ||h||^2."""
    h_true = np.asarray(h_true).ravel()
    h_hat = np.asarray(h_hat).ravel()
    if h_true.shape != h_hat.shape:
        raise ValueError("dimension mismatch")
    denom = float(np.vdot(h_true, h_true).real)
    if denom <= 0:
        raise ValueError("true channel must be nonzero")
    e_plus = float(np.vdot(h_true - h_hat, h_true - h_hat).real)
    e_minus = float(np.vdot(h_true + h_hat, h_true + h_hat).real)
    return min(e_plus, e_minus) / denom
