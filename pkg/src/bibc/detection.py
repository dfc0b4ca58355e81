"""Bit detection and error probability for the backscatter link.

The device signals bit i in slot j with reflection coefficient gamma_j^i of
constant magnitude.  After removing the known direct-link contribution, the
log-likelihood-ratio detector is

    LLR = sum_j Re{ (gamma_j^1 - gamma_j^0) y'_j^H D_j^{-1} H_BL x },

deciding bit 1 iff LLR > 0 (ties go to bit 0).  With Gaussian noise of
diagonal covariance D the error probability is

    Pe = Q( ||D^{-1/2} H_BL x|| sqrt( sum_j |gamma^1-gamma^0|^2 / 2 ) ).

The mismatch detector substitutes estimated channels and covariance; its
error probability follows from the exact first two moments of the statistic.
A Monte-Carlo simulator with a true mid-rise quantizer front end validates
the closed forms (the Gaussian quantization-noise model they rest on is an
approximation, so divergence at aggressive bit depths is expected and
measurable).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import hadamard
from scipy.special import erfc

from bibc.quantization import quantize
from bibc.rng import complex_normal, substream

SIM_BATCH = 8192            # fixed batch size keeps substreams deterministic
DEFAULT_HEADROOM = 3.0      # quantizer range in units of per-branch rms


@dataclass
class SignalingSpec:
    """Per-slot reflection coefficients under each bit hypothesis."""

    gamma0: np.ndarray
    gamma1: np.ndarray

    def __post_init__(self) -> None:
        self.gamma0 = np.atleast_1d(np.asarray(self.gamma0, dtype=complex))
        self.gamma1 = np.atleast_1d(np.asarray(self.gamma1, dtype=complex))
        if self.gamma0.shape != self.gamma1.shape:
            raise ValueError("hypothesis sequences must have equal length")
        mags = np.concatenate([np.abs(self.gamma0) ** 2, np.abs(self.gamma1) ** 2])
        if np.ptp(mags) > 1e-9 * max(mags.max(), 1e-300):
            raise ValueError("|gamma_j^i|^2 must be a single constant delta")
        if mags.max() == 0:
            raise ValueError("reflection coefficients cannot all be zero")

    @property
    def n_slots(self) -> int:
        return self.gamma0.size

    @property
    def delta(self) -> float:
        return float(np.abs(self.gamma0[0]) ** 2)

    @property
    def diff(self) -> np.ndarray:
        return self.gamma1 - self.gamma0

    @classmethod
    def bpsk(cls, n_slots: int = 1, delta: float = 1.0) -> "SignalingSpec":
        amp = np.sqrt(delta)
        return cls(gamma0=-amp * np.ones(n_slots), gamma1=amp * np.ones(n_slots))


def orthogonal_signaling(n_slots: int, n_devices: int, delta=1.0) -> list[SignalingSpec]:
    """Mutually orthogonal +-1 sequences (Hadamard rows), one per device."""
    if n_slots < n_devices:
        raise ValueError("need at least as many slots as devices")
    order = 1
    while order < n_slots:
        order *= 2
    if order != n_slots:
        raise ValueError("orthogonal signaling needs a power-of-two slot count")
    H = hadamard(n_slots)
    delta = np.broadcast_to(np.asarray(delta, dtype=float), (n_devices,))
    out = []
    for k in range(n_devices):
        amp = np.sqrt(delta[k])
        row = H[k].astype(complex)
        out.append(SignalingSpec(gamma0=-amp * row, gamma1=amp * row))
    return out


def q_function(x):
    """Gaussian upper-tail probability."""
    x = np.asarray(x, dtype=float)
    out = 0.5 * erfc(x / np.sqrt(2.0))
    return float(out) if out.ndim == 0 else out


def llr_perfect(y_slots, x, H_DL, H_BL, d_diag, signaling: SignalingSpec):
    """Test statistic for known channels.  `y_slots` is (J, N_R) or, for a
    batch, (J, N_R, B); returns a float or a (B,) array."""
    y = np.asarray(y_slots, dtype=complex)
    if y.ndim == 2:
        y = y[:, :, None]
        squeeze = True
    else:
        squeeze = False
    J, n_r, _ = y.shape
    if J != signaling.n_slots or H_BL.shape[0] != n_r:
        raise ValueError("slot/antenna dimensions disagree with the signaling spec")
    d_diag = np.asarray(d_diag, dtype=float)
    if np.any(d_diag <= 0):
        raise ValueError("noise covariance must be positive")
    mean = (H_DL @ x)[None, :, None]
    g = (H_BL @ x) / d_diag
    yprime = y - mean
    per_slot = np.einsum("jrb,r->jb", yprime.conj(), g)
    llr = np.sum((signaling.diff[:, None] * per_slot).real, axis=0)
    return float(llr[0]) if squeeze else llr


def llr_mismatch(y_slots, x, H_DL_hat, H_BL_hat, d_hat_diag, signaling: SignalingSpec):
    """Mismatch statistic: the perfect-CSI rule with estimates substituted."""
    return llr_perfect(y_slots, x, H_DL_hat, H_BL_hat, d_hat_diag, signaling)


def pe_perfect(x, H_BL, d_diag, signaling: SignalingSpec) -> float:
    """Closed-form error probability under known channels."""
    d_diag = np.asarray(d_diag, dtype=float)
    s = np.linalg.norm((H_BL @ x) / np.sqrt(d_diag))
    scale = np.sqrt(np.sum(np.abs(signaling.diff) ** 2) / 2.0)
    return q_function(s * scale)


def pe_mismatch(
    x,
    H_BL,
    H_BL_hat,
    d_diag,
    d_hat_diag,
    sigma2_dl: float,
    signaling: SignalingSpec,
) -> float:
    """Closed-form error probability of the mismatch detector.

    `d_diag` is the true noise covariance diagonal, `d_hat_diag` the one the
    detector uses, and `sigma2_dl` the per-entry variance of the Gaussian
    direct-link estimation error (0 when the direct link is known exactly).
    """
    if sigma2_dl < 0:
        raise ValueError("sigma2_dl must be nonnegative")
    x = np.asarray(x, dtype=complex)
    d_diag = np.asarray(d_diag, dtype=float)
    d_hat_diag = np.asarray(d_hat_diag, dtype=float)
    v_hat = H_BL_hat @ x
    v_true = H_BL @ x
    diff = signaling.diff
    # mean under bit i: Re{ sum_j diff_j (gamma_j^i)^* (H_BL x)^H Dhat^{-1} Hhat_BL x }
    inner = np.sum(v_true.conj() * v_hat / d_hat_diag)
    mu0 = float((np.sum(diff * signaling.gamma0.conj()) * inner).real)
    mu1 = float((np.sum(diff * signaling.gamma1.conj()) * inner).real)
    c_diag = np.sqrt((d_diag + np.vdot(x, x).real * sigma2_dl) / d_hat_diag**2)
    sigma2 = 0.5 * np.sum(np.abs(diff) ** 2) * float(np.sum((c_diag * np.abs(v_hat)) ** 2))
    sigma = np.sqrt(sigma2)
    if sigma == 0:
        return 0.5 * float(mu0 >= 0) + 0.5 * float(mu1 <= 0)
    return 0.5 * q_function(-mu0 / sigma) + 0.5 * q_function(mu1 / sigma)


def detect_multi(y_slots, x, H_DL, H_BL_list, d_diag, signaling_list) -> np.ndarray:
    """Per-device bit decisions with orthogonal reflection sequences."""
    K = len(H_BL_list)
    if len(signaling_list) != K:
        raise ValueError("one signaling spec per device required")
    J = signaling_list[0].n_slots
    if J < K:
        raise ValueError("need at least as many slots as devices")
    for k in range(K):
        for kp in range(K):
            if k == kp:
                continue
            d = signaling_list[k].diff
            for g in (signaling_list[kp].gamma0, signaling_list[kp].gamma1):
                if abs(np.sum(d * g.conj())) > 1e-9 * J:
                    raise ValueError("reflection sequences are not orthogonal")
    bits = np.empty(K, dtype=int)
    for k in range(K):
        llr = llr_perfect(y_slots, x, H_DL, H_BL_list[k], d_diag, signaling_list[k])
        bits[k] = 1 if llr > 0 else 0
    return bits


def _per_antenna_steps(x, H_DL, H_BL, bits, delta: float, headroom: float) -> np.ndarray:
    """Per-antenna mid-rise step: the quantizer range covers `headroom`
    times the rms of each I/Q branch."""
    p = np.abs(H_DL @ x) ** 2 + delta * np.abs(H_BL @ x) ** 2 + 1.0
    return headroom * np.sqrt(p / 2.0) / 2.0 ** (np.asarray(bits) - 1)


def simulate_ber(
    x,
    H_DL,
    H_BL,
    bits,
    signaling: SignalingSpec,
    trials: int,
    seed: int,
    det_H_DL=None,
    det_H_BL=None,
    det_d_diag=None,
    d_diag=None,
    apply_quantizer: bool = True,
    headroom: float = DEFAULT_HEADROOM,
) -> tuple[int, int]:
    """Monte-Carlo bit errors of the LLR detector through the true mid-rise
    quantizer front end.

    The detector uses `det_*` quantities when given (mismatch detection with
    estimated CSI), otherwise the true ones.  `d_diag` overrides the noise
    covariance used by the detector; by default it is the closed-form model
    value for the true channels.  Returns (errors, trials).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    x = np.asarray(x, dtype=complex)
    H_DL = np.asarray(H_DL, dtype=complex)
    H_BL = np.asarray(H_BL, dtype=complex)
    bits_arr = np.asarray(bits, dtype=int)
    from bibc.quantization import noise_variance

    det_H_DL = H_DL if det_H_DL is None else np.asarray(det_H_DL, dtype=complex)
    det_H_BL = H_BL if det_H_BL is None else np.asarray(det_H_BL, dtype=complex)
    if det_d_diag is None:
        if d_diag is not None:
            det_d = np.asarray(d_diag, dtype=float)
        else:
            dli = np.abs(det_H_DL @ x) ** 2
            sig = signaling.delta * np.abs(det_H_BL @ x) ** 2
            det_d = noise_variance(sig, dli, bits_arr) + 1.0
    else:
        det_d = np.asarray(det_d_diag, dtype=float)

    J = signaling.n_slots
    mean_dl = H_DL @ x
    bl = H_BL @ x
    steps = _per_antenna_steps(x, H_DL, H_BL, bits_arr, signaling.delta, headroom)
    det_mean = det_H_DL @ x
    g = (det_H_BL @ x) / det_d
    diff = signaling.diff

    errors = 0
    done = 0
    batch_idx = 0
    while done < trials:
        n = min(SIM_BATCH, trials - done)
        rng = substream(seed, batch_idx)
        tx_bits = rng.integers(0, 2, size=n)
        gam = np.where(tx_bits[None, :] == 1, signaling.gamma1[:, None], signaling.gamma0[:, None])
        w = complex_normal(rng, (J, H_BL.shape[0], n))
        y = mean_dl[None, :, None] + gam[:, None, :] * bl[None, :, None] + w
        if apply_quantizer:
            for r in range(H_BL.shape[0]):
                b_r = int(bits_arr[r])
                y[:, r, :] = quantize(y[:, r, :].real, steps[r], b_r) + 1j * quantize(
                    y[:, r, :].imag, steps[r], b_r
                )
        yprime = y - det_mean[None, :, None]
        per_slot = np.einsum("jrb,r->jb", yprime.conj(), g)
        llr = np.sum((diff[:, None] * per_slot).real, axis=0)
        decisions = (llr > 0).astype(int)
        errors += int(np.sum(decisions != tx_bits))
        done += n
        batch_idx += 1
    return errors, trials
