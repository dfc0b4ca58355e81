"""Experiment orchestration: seeded sweeps and CSV emission.

Experiment kinds:

  pe_sweep       closed-form and/or simulated bit-error probability over a
                 received-SNR grid, per problem and ADC bit depth
  pg_map         path-gain field of a designed beamformer on a z-plane grid
  nmse_sweep     channel-estimation error with and without the refinement
                 iteration, over the pilot SNR
  table_summary  one row per problem: path gain at the device, objective,
                 and worst interference ratio for the selected partition
  multi_bde      max-min SINR design for several devices

Received SNR is defined as P_max times the squared average per-antenna
amplitude path loss (estimated by Monte-Carlo over uniformly random device
positions), so sweeps specify SNR in dB and the power budget follows.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from bibc.beamforming import solve_problem
from bibc.detection import SignalingSpec, pe_mismatch, pe_perfect, simulate_ber
from bibc.estimation import EstimationConfig, estimate_single, gen_pilots, nmse, rx_all_pilots
from bibc.partitioning import GameConfig, dp_partition, greedy_partition, run_ap_selection
from bibc.quantization import noise_covariance, quantizer_for
from bibc.rng import substream
from bibc.scene import GridSpec, Partition, Scene, SceneChannels, default_scene, load_scene, pg_map

DP_SCALE = 1e8

# Expensive solvers inherit the partition found by their closed-form
# relatives; the final beamformer is then solved once on that partition.
PARTITION_SURROGATE = {
    "p_dli": "p_alpha0",
    "p_dli_prime": "p_alpha0_prime_closed",
    "p_alpha0_prime_convex": "p_alpha0_prime_closed",
    "p_d": "p_bf",
    "p_d_prime": "p_bf_prime",
}

PE_SWEEP_HEADER = ["snr_db", "problem", "bits", "csi", "pe_closed", "pe_sim", "trials"]
PG_MAP_HEADER = ["x_m", "y_m", "pg_db"]
NMSE_SWEEP_HEADER = ["snr_p_db", "ap_id", "variant", "nmse_db"]
TABLE_SUMMARY_HEADER = ["problem", "pg_at_bd_db", "objective_db", "c_s_db"]
MULTI_BDE_HEADER = ["bde", "sinr_db", "pg_at_bde_db", "c_s_db"]
ESTIMATE_HEADER = ["snr_p_db", "ap_id", "nmse_iter", "nmse_noiter"]


def snr_calibration(scene: Scene, trials: int = 2000, seed: int = 0) -> float:
    """Average per-antenna amplitude path loss over uniformly random device
    positions (x, y over the floor, z up to 2 m).

    Returns the root-mean-square channel magnitude, so the received SNR per
    antenna at budget P is P * beta_bar^2; for a deterministic geometry this
    reduces to the plain line-of-sight amplitude.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    from bibc.scene import antenna_positions, channel_matrix

    rng = substream(seed, 0xBE7A)
    X, Y, Z = scene.room.dims
    zmax = min(2.0, Z)
    pts = np.column_stack(
        [
            rng.uniform(1e-6, X - 1e-6, trials),
            rng.uniform(1e-6, Y - 1e-6, trials),
            rng.uniform(1e-6, zmax - 1e-6, trials),
        ]
    )
    total = 0.0
    count = 0
    for ap in scene.aps:
        h = channel_matrix(antenna_positions(ap), pts, scene.room, scene.wavelength)
        total += float(np.sum(np.abs(h) ** 2))
        count += h.size
    return float(np.sqrt(total / count))


def pmax_for_snr_db(snr_db: float, beta_bar: float) -> float:
    return 10.0 ** (snr_db / 10.0) / beta_bar**2


def pilot_pmax_for_snr_db(snr_p_db: float, beta_bar: float) -> float:
    """Pilot-phase budget: the pilot SNR is referenced to the round-trip
    (cascade) path, so the received backscattered pilot at the reference AP
    has per-symbol SNR near snr_p_db."""
    return 10.0 ** (snr_p_db / 10.0) / beta_bar**4


def crossing_snr(snr_db, pe, target: float) -> float:
    """SNR (dB) where a monotone-decreasing Pe curve crosses `target`,
    by linear interpolation of log10(Pe); NaN when it never does."""
    snr_db = np.asarray(snr_db, dtype=float)
    lp = np.log10(np.maximum(np.asarray(pe, dtype=float), 1e-300))
    lt = np.log10(target)
    for i in range(snr_db.size - 1):
        if (lp[i] - lt) * (lp[i + 1] - lt) <= 0 and lp[i] != lp[i + 1]:
            t = (lt - lp[i]) / (lp[i + 1] - lp[i])
            return float(snr_db[i] + t * (snr_db[i + 1] - snr_db[i]))
    return float("nan")


def db(x: float) -> float:
    return 10.0 * np.log10(max(float(x), 1e-300))


def select_partition(
    workspace: SceneChannels,
    problem: str,
    game: GameConfig,
    alpha: float | None = None,
    delta=1.0,
    method: str = "auto",
    dp_scale: float = DP_SCALE,
    **solve_kwargs,
) -> Partition:
    """Role selection for a problem: subset-sum DP for the unconstrained
    total-power problem, the coalition game elsewhere (expensive problems go
    through their closed-form surrogate)."""
    if method == "dp" or (method == "auto" and problem == "p_bf"):
        return dp_partition(workspace.ap_gains(), dp_scale, workspace.ref_id)
    if method == "greedy":
        part, _ = greedy_partition(
            workspace, problem, p_max=1.0, alpha=alpha, delta=delta, seed=game.rng_seed,
            **solve_kwargs,
        )
        return part
    if method == "exhaustive":
        from bibc.partitioning import exhaustive_partition

        part, _ = exhaustive_partition(
            workspace, problem, p_max=1.0, alpha=alpha, delta=delta, **solve_kwargs
        )
        return part
    surrogate = PARTITION_SURROGATE.get(problem, problem) if method == "auto" else problem
    part, _, _ = run_ap_selection(
        workspace, surrogate, game, p_max=1.0, alpha=alpha, delta=delta, **solve_kwargs
    )
    return part


@dataclass
class ExperimentConfig:
    kind: str
    scene: Scene
    problems: list[str] = field(default_factory=lambda: ["p_bf", "p_alpha0"])
    bits: list[int] = field(default_factory=lambda: [1, 8])
    snr_db: np.ndarray = field(default_factory=lambda: np.arange(16.0, 36.1, 2.0))
    trials: int = 0
    seed: int = 0
    csi: str = "perfect"
    snr_p_db: float = 10.0
    estimation_draws: int = 10
    jprime: int = 2
    alpha_db: float = 0.0
    grid: tuple[int, int, float] | None = None     # (nx, ny, z)
    partition_method: str = "auto"
    game: GameConfig = field(default_factory=GameConfig)
    calibration_trials: int = 2000
    design_snr_db: float = 28.0
    out: str = "out.csv"

    def __post_init__(self) -> None:
        if self.kind not in ("pe_sweep", "pg_map", "nmse_sweep", "table_summary", "multi_bde"):
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        self.snr_db = np.asarray(self.snr_db, dtype=float)
        if self.snr_db.size == 0:
            raise ValueError("empty SNR range")
        if self.trials < 0:
            raise ValueError("trials must be >= 0")
        if self.csi not in ("perfect", "estimated"):
            raise ValueError("csi must be 'perfect' or 'estimated'")


def load_experiment(path) -> ExperimentConfig:
    cfg = yaml.safe_load(Path(path).read_text())
    return experiment_from_dict(cfg)


def experiment_from_dict(cfg: dict) -> ExperimentConfig:
    scene_cfg = cfg.get("scene", "default")
    if scene_cfg == "default" or scene_cfg is None:
        scene = default_scene()
    elif isinstance(scene_cfg, str):
        scene = load_scene(scene_cfg)
    else:
        from bibc.scene import _scene_from_dict

        scene = _scene_from_dict(scene_cfg)
    snr = cfg.get("snr_db", {"start": 16.0, "stop": 36.0, "step": 2.0})
    if isinstance(snr, dict):
        snr_grid = np.arange(snr["start"], snr["stop"] + 1e-9, snr.get("step", 2.0))
    else:
        snr_grid = np.asarray(snr, dtype=float)
    game_cfg = cfg.get("game", {})
    kwargs = dict(
        kind=cfg["kind"],
        scene=scene,
        snr_db=snr_grid,
        game=GameConfig(
            zeta_init=int(game_cfg.get("zeta_init", 30)),
            zeta_alg5=int(game_cfg.get("zeta_alg5", 4)),
            rng_seed=int(cfg.get("seed", 0)),
        ),
    )
    for key in (
        "problems", "bits", "trials", "seed", "csi", "snr_p_db", "estimation_draws",
        "jprime", "alpha_db", "partition_method", "calibration_trials", "design_snr_db",
        "out",
    ):
        if key in cfg:
            kwargs[key] = cfg[key]
    if "grid" in cfg:
        g = cfg["grid"]
        kwargs["grid"] = (int(g["nx"]), int(g["ny"]), float(g.get("z", 2.0)))
    return ExperimentConfig(**kwargs)


def write_csv(path, header: list[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.10g}"
    return v


def _solve_reference(workspace, partition, problem, cfg: ExperimentConfig, beta_bar, bits_vec):
    """Unit-budget solution whose direction is reused across the SNR sweep
    (every solver here scales linearly with sqrt(P))."""
    channels = workspace.assemble(partition)
    if problem in ("p_d", "p_d_prime"):
        p_ref = pmax_for_snr_db(cfg.design_snr_db, beta_bar)
        sol = solve_problem(problem, channels, p_ref, quantizer_bits=bits_vec)
        return channels, sol, p_ref
    sol = solve_problem(problem, channels, 1.0, alpha=10.0 ** (cfg.alpha_db / 10.0))
    return channels, sol, 1.0


def _estimated_channel_draws(workspace, partition, cfg: ExperimentConfig, beta_bar):
    """Estimate all device channels from noisy pilots, `estimation_draws`
    times; returns per-draw dicts of estimated per-AP vectors."""
    scene = workspace.scene
    p_pilot = pilot_pmax_for_snr_db(cfg.snr_p_db, beta_bar)
    pilots = gen_pilots(
        {ap.id: ap.n_antennas for ap in scene.aps}, None, p_pilot, n_rounds=cfg.jprime
    )
    truth = {i: workspace.h_ap[i] for i in workspace.ap_ids}
    draws = []
    for e in range(cfg.estimation_draws):
        rng = substream(cfg.seed, 0xE57, e)
        obs = rx_all_pilots(truth, workspace.ref_id, pilots, rng)
        res = estimate_single(obs, pilots, workspace.ref_id)
        h_hat = dict(res.h_ap)
        h_hat[workspace.ref_id] = res.h_ref
        draws.append(h_hat)
    return draws


def _assemble_estimate(h_hat: dict[int, np.ndarray], partition: Partition):
    h_c = np.concatenate([np.atleast_1d(h_hat[i]).ravel() for i in partition.ce_ids])
    h_r = np.concatenate([np.atleast_1d(h_hat[i]).ravel() for i in partition.reader_ids])
    return h_c, h_r


def run_pe_sweep(cfg: ExperimentConfig) -> list[list]:
    ws = SceneChannels(cfg.scene)
    beta_bar = snr_calibration(cfg.scene, cfg.calibration_trials, cfg.seed)
    signaling = SignalingSpec.bpsk(1)
    rows = []
    for problem in cfg.problems:
        partition = select_partition(
            ws, problem, cfg.game, alpha=10.0 ** (cfg.alpha_db / 10.0),
            method=cfg.partition_method,
        )
        cached = None
        for bits in cfg.bits:
            channels = ws.assemble(partition)
            qspec = quantizer_for(channels, cfg.scene, bits_override=bits)
            if problem in ("p_d", "p_d_prime") or cached is None:
                # noise-weighted designs depend on the bit depth; the rest
                # are solved once per partition
                cached = _solve_reference(ws, partition, problem, cfg, beta_bar, qspec.bits)
            channels, ref_sol, p_ref = cached
            x_dir = ref_sol.x
            est_draws = None
            if cfg.csi == "estimated":
                est_draws = _estimated_channel_draws(ws, partition, cfg, beta_bar)
            for snr_db in cfg.snr_db:
                p = pmax_for_snr_db(float(snr_db), beta_bar)
                x = x_dir * np.sqrt(p / p_ref)
                d_true = noise_covariance(x, channels.H_DL, channels.H_BL, qspec).diag
                if cfg.csi == "perfect":
                    pe_c = pe_perfect(x, channels.H_BL, d_true, signaling)
                    pe_s = ""
                    if cfg.trials > 0:
                        err, tr = simulate_ber(
                            x, channels.H_DL, channels.H_BL, qspec.bits, signaling,
                            cfg.trials, seed=cfg.seed,
                        )
                        pe_s = err / tr
                else:
                    pes = []
                    err_total = 0
                    tr_total = 0
                    per_draw = max(1, cfg.trials // max(1, len(est_draws)))
                    for e, h_hat in enumerate(est_draws):
                        hc_e, hr_e = _assemble_estimate(h_hat, partition)
                        sol_e = solve_problem(
                            problem if problem not in ("p_d", "p_d_prime") else "p_bf",
                            _clone_channels(channels, hc_e, hr_e), 1.0,
                            alpha=10.0 ** (cfg.alpha_db / 10.0),
                        )
                        x_e = sol_e.x * np.sqrt(p)
                        H_BL_hat = np.outer(hr_e, hc_e)
                        d_hat = noise_covariance(
                            x_e, channels.H_DL, H_BL_hat, qspec, delta=signaling.delta
                        ).diag
                        d_true_e = noise_covariance(
                            x_e, channels.H_DL, channels.H_BL, qspec, delta=signaling.delta
                        ).diag
                        pes.append(
                            pe_mismatch(
                                x_e, channels.H_BL, H_BL_hat, d_true_e, d_hat, 0.0, signaling
                            )
                        )
                        if cfg.trials > 0:
                            err, tr = simulate_ber(
                                x_e, channels.H_DL, channels.H_BL, qspec.bits, signaling,
                                per_draw, seed=cfg.seed + 7919 * e,
                                det_H_BL=H_BL_hat, det_d_diag=d_hat,
                            )
                            err_total += err
                            tr_total += tr
                    pe_c = float(np.mean(pes))
                    pe_s = err_total / tr_total if tr_total else ""
                rows.append(
                    [float(snr_db), problem, bits, cfg.csi, pe_c, pe_s,
                     cfg.trials if cfg.trials else 0]
                )
    return rows


def _clone_channels(channels, h_c, h_r):
    from dataclasses import replace

    return replace(channels, h_c_all=h_c[None, :], h_r_all=h_r[None, :])


def run_pg_map(cfg: ExperimentConfig) -> list[list]:
    ws = SceneChannels(cfg.scene)
    problem = cfg.problems[0]
    partition = select_partition(
        ws, problem, cfg.game, alpha=10.0 ** (cfg.alpha_db / 10.0), method=cfg.partition_method
    )
    channels = ws.assemble(partition)
    sol = solve_problem(problem, channels, cfg.scene.p_max, alpha=10.0 ** (cfg.alpha_db / 10.0))
    nx, ny, z = cfg.grid if cfg.grid else (80, 40, 2.0)
    X, Y, _ = cfg.scene.room.dims
    grid = GridSpec(x=(0.0, X), y=(0.0, Y), nx=nx, ny=ny, z=z)
    xs, ys, pg = pg_map(ws, partition, sol.x, grid)
    rows = []
    for iy, y in enumerate(ys):
        for ix, x in enumerate(xs):
            rows.append([float(x), float(y), db(pg[iy, ix])])
    return rows


def run_nmse_sweep(cfg: ExperimentConfig) -> list[list]:
    scene = cfg.scene
    ws = SceneChannels(scene)
    beta_bar = snr_calibration(scene, cfg.calibration_trials, cfg.seed)
    est_cfg = EstimationConfig()
    truth = {i: ws.h_ap[i] for i in ws.ap_ids}
    rows = []
    trials = max(1, cfg.trials)
    for snr_p_db in cfg.snr_db:
        p_pilot = pilot_pmax_for_snr_db(float(snr_p_db), beta_bar)
        pilots = gen_pilots(
            {ap.id: ap.n_antennas for ap in scene.aps}, None, p_pilot, n_rounds=cfg.jprime
        )
        acc_iter = {i: 0.0 for i in ws.ap_ids}
        acc_noiter = {i: 0.0 for i in ws.ap_ids}
        for t in range(trials):
            rng = substream(cfg.seed, 0x17E5, int(round(snr_p_db * 1000)), t)
            obs = rx_all_pilots(truth, ws.ref_id, pilots, rng)
            r_it = estimate_single(obs, pilots, ws.ref_id, est_cfg, iterate=True)
            r_no = estimate_single(obs, pilots, ws.ref_id, est_cfg, iterate=False)
            for i in ws.ap_ids:
                true_i = truth[i][0]
                hat_it = r_it.h_ref if i == ws.ref_id else r_it.h_ap[i]
                hat_no = r_no.h_ref if i == ws.ref_id else r_no.h_ap[i]
                acc_iter[i] += nmse(true_i, hat_it)
                acc_noiter[i] += nmse(true_i, hat_no)
        for i in ws.ap_ids:
            rows.append([float(snr_p_db), i, "iter", db(acc_iter[i] / trials)])
            rows.append([float(snr_p_db), i, "noiter", db(acc_noiter[i] / trials)])
    return rows


def run_table_summary(cfg: ExperimentConfig) -> list[list]:
    ws = SceneChannels(cfg.scene)
    problems = cfg.problems or [
        "p_bf", "p_dli", "p_alpha0", "p_bf_prime", "p_dli_prime",
        "p_alpha0_prime_convex", "p_alpha0_prime_closed",
    ]
    alpha = 10.0 ** (cfg.alpha_db / 10.0)
    rows = []
    for problem in problems:
        partition = select_partition(
            ws, problem, cfg.game, alpha=alpha, method=cfg.partition_method
        )
        channels = ws.assemble(partition)
        sol = solve_problem(problem, channels, cfg.scene.p_max, alpha=alpha)
        pg_bd = float(np.abs(channels.h_c @ sol.x) ** 2 / max(np.vdot(sol.x, sol.x).real, 1e-300))
        rows.append([problem, db(pg_bd), sol.objective_db, sol.dli_metric_db])
    return rows


def run_multi_bde(cfg: ExperimentConfig) -> list[list]:
    ws = SceneChannels(cfg.scene)
    if cfg.scene.n_bdes < 2:
        raise ValueError("multi_bde experiments need a scene with several BDEs")
    partition, res, _ = run_ap_selection(
        ws, "p_multi",
        GameConfig(zeta_init=cfg.game.zeta_init, zeta_alg5=1, rng_seed=cfg.seed),
        p_max=cfg.scene.p_max,
    )
    sol = res.solution
    channels = ws.assemble(partition)
    rows = []
    sinrs = sol.diagnostics.get("sinr_per_device", np.zeros(cfg.scene.n_bdes))
    for k in range(cfg.scene.n_bdes):
        hk = channels.h_c_all[k]
        pg_k = float(np.abs(hk @ sol.x) ** 2 / max(np.vdot(sol.x, sol.x).real, 1e-300))
        rows.append([k, db(float(sinrs[k])), db(pg_k), sol.dli_metric_db])
    return rows


def run_experiment(cfg: ExperimentConfig, out: str | None = None) -> Path:
    runner = {
        "pe_sweep": (run_pe_sweep, PE_SWEEP_HEADER),
        "pg_map": (run_pg_map, PG_MAP_HEADER),
        "nmse_sweep": (run_nmse_sweep, NMSE_SWEEP_HEADER),
        "table_summary": (run_table_summary, TABLE_SUMMARY_HEADER),
        "multi_bde": (run_multi_bde, MULTI_BDE_HEADER),
    }[cfg.kind]
    rows = runner[0](cfg)
    return write_csv(out or cfg.out, runner[1], rows)
