"""Batch command-line interface.

    bibc estimate        NMSE of the channel estimator vs pilot SNR
    bibc pe-sweep        closed-form + simulated error probability sweep
    bibc beamform        solve one beamforming problem on a partition
    bibc partition       run an AP role-selection method
    bibc snr-calibration average path loss of a scene
    bibc run             run an experiment config file (harness kinds)

Scenes come from YAML/JSON config files; `--config default` uses the
built-in reference layout.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from bibc import harness
from bibc.beamforming import solve_problem
from bibc.partitioning import GameConfig, dp_partition, exhaustive_partition, greedy_partition, run_ap_selection, utility
from bibc.quantization import quantizer_for
from bibc.scene import Partition, SceneChannels, default_scene, load_scene


def _scene(arg: str):
    if arg in ("default", None):
        return default_scene()
    return load_scene(arg)


def _float_list(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _snr_range(text: str) -> np.ndarray:
    parts = text.split(":")
    if len(parts) == 3:
        start, stop, step = map(float, parts)
        return np.arange(start, stop + 1e-9, step)
    return np.asarray(_float_list(text))


def _load_partition(path) -> Partition:
    cfg = json.loads(Path(path).read_text())
    return Partition(
        ce_ids=tuple(cfg["ce_ids"]),
        reader_ids=tuple(cfg["reader_ids"]),
        ref_id=int(cfg["ref_id"]),
    )


def _save_partition(partition: Partition, path) -> None:
    Path(path).write_text(
        json.dumps(
            {
                "ce_ids": list(partition.ce_ids),
                "reader_ids": list(partition.reader_ids),
                "ref_id": partition.ref_id,
            },
            indent=2,
        )
        + "\n"
    )


def cmd_estimate(args) -> int:
    scene = _scene(args.config)
    cfg = harness.ExperimentConfig(
        kind="nmse_sweep",
        scene=scene,
        snr_db=np.asarray(_float_list(args.snr_p_db)),
        trials=args.trials,
        seed=args.seed,
        jprime=args.jprime,
    )
    rows = harness.run_nmse_sweep(cfg)
    merged = {}
    for snr_p_db, ap_id, variant, val in rows:
        merged.setdefault((snr_p_db, ap_id), {})[variant] = val
    out_rows = [
        [k[0], k[1], v["iter"], v["noiter"]] for k, v in sorted(merged.items())
    ]
    path = harness.write_csv(args.out, harness.ESTIMATE_HEADER, out_rows)
    print(f"wrote {path}")
    return 0


def cmd_pe_sweep(args) -> int:
    scene = _scene(args.config)
    cfg = harness.ExperimentConfig(
        kind="pe_sweep",
        scene=scene,
        problems=args.problem.split(","),
        bits=_int_list(args.bits),
        snr_db=_snr_range(args.snr_db_range),
        trials=args.trials,
        seed=args.seed,
        csi=args.csi,
        alpha_db=args.alpha_db,
    )
    rows = harness.run_pe_sweep(cfg)
    out_rows = [[r[0], r[1], r[2], r[4], r[5], r[6]] for r in rows]
    path = harness.write_csv(
        args.out, ["snr_db", "problem", "bits", "pe_closed", "pe_sim", "trials"], out_rows
    )
    print(f"wrote {path}")
    return 0


def cmd_beamform(args) -> int:
    scene = _scene(args.config)
    ws = SceneChannels(scene)
    if args.partition_file:
        partition = _load_partition(args.partition_file)
    else:
        partition = harness.select_partition(
            ws, args.problem, GameConfig(rng_seed=args.seed),
            alpha=10.0 ** (args.alpha_db / 10.0),
        )
    channels = ws.assemble(partition)
    qspec = quantizer_for(channels, scene)
    sol = solve_problem(
        args.problem, channels, args.p_max,
        alpha=10.0 ** (args.alpha_db / 10.0),
        quantizer_bits=qspec.bits,
    )
    prefix = Path(args.out_prefix)
    sol_rows = [[float(v.real), float(v.imag)] for v in sol.x]
    harness.write_csv(prefix.with_suffix(".solution.csv"), ["re", "im"], sol_rows)
    harness.write_csv(
        prefix.with_suffix(".diagnostics.csv"),
        ["objective_db", "c_s_db", "power", "feasible"],
        [[sol.objective_db, sol.dli_metric_db, sol.total_power, int(sol.feasible)]],
    )
    print(f"objective {sol.objective_db:.2f} dB, C(S) {sol.dli_metric_db:.1f} dB, "
          f"feasible={sol.feasible}")
    return 0


def cmd_partition(args) -> int:
    scene = _scene(args.config)
    ws = SceneChannels(scene)
    alpha = 10.0 ** (args.alpha_db / 10.0)
    game = GameConfig(rng_seed=args.seed)
    if args.method == "dp":
        part = dp_partition(ws.ap_gains(), harness.DP_SCALE, ws.ref_id)
    elif args.method == "coalition":
        part, _, _ = run_ap_selection(ws, args.problem, game, p_max=1.0, alpha=alpha)
    elif args.method == "greedy":
        part, _ = greedy_partition(ws, args.problem, p_max=1.0, alpha=alpha, seed=args.seed)
    elif args.method == "exhaustive":
        part, _ = exhaustive_partition(ws, args.problem, p_max=1.0, alpha=alpha)
    else:
        raise ValueError(f"unknown method {args.method!r}")
    res = utility(ws, part, args.problem, p_max=1.0, alpha=alpha)
    _save_partition(part, args.out)
    harness.write_csv(
        Path(args.out).with_suffix(".diagnostics.csv"),
        ["method", "problem", "utility_db", "c_s_db", "feasible"],
        [[args.method, args.problem, harness.db(res.utility), harness.db(res.c_metric),
          int(res.feasible)]],
    )
    print(f"CE={list(part.ce_ids)} readers={list(part.reader_ids)} "
          f"U={harness.db(res.utility):.2f} dB")
    return 0


def cmd_snr_calibration(args) -> int:
    scene = _scene(args.config)
    beta = harness.snr_calibration(scene, trials=args.trials, seed=args.seed)
    print(f"beta_bar = {20.0 * np.log10(beta):.2f} dB (amplitude), linear {beta:.6g}")
    return 0


def cmd_run(args) -> int:
    cfg = harness.load_experiment(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.game.rng_seed = args.seed
    path = harness.run_experiment(cfg, out=args.out)
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bibc", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="channel-estimation NMSE sweep")
    est.add_argument("--config", default="default")
    est.add_argument("--snr-p-db", default="0,4,8")
    est.add_argument("--jprime", type=int, default=1)
    est.add_argument("--trials", type=int, default=50)
    est.add_argument("--seed", type=int, default=0)
    est.add_argument("--out", default="nmse.csv")
    est.set_defaults(func=cmd_estimate)

    pe = sub.add_parser("pe-sweep", help="error-probability sweep")
    pe.add_argument("--config", default="default")
    pe.add_argument("--problem", default="p_bf,p_alpha0")
    pe.add_argument("--bits", default="1,8")
    pe.add_argument("--snr-db-range", default="16:36:2")
    pe.add_argument("--trials", type=int, default=0)
    pe.add_argument("--csi", choices=("perfect", "estimated"), default="perfect")
    pe.add_argument("--alpha-db", type=float, default=0.0)
    pe.add_argument("--seed", type=int, default=0)
    pe.add_argument("--out", default="pe.csv")
    pe.set_defaults(func=cmd_pe_sweep)

    bf = sub.add_parser("beamform", help="solve one beamforming problem")
    bf.add_argument("--config", default="default")
    bf.add_argument("--problem", default="p_alpha0")
    bf.add_argument("--alpha-db", type=float, default=0.0)
    bf.add_argument("--p-max", type=float, default=1.0)
    bf.add_argument("--partition-file", default=None)
    bf.add_argument("--seed", type=int, default=0)
    bf.add_argument("--out-prefix", default="beamformer")
    bf.set_defaults(func=cmd_beamform)

    pa = sub.add_parser("partition", help="AP role selection")
    pa.add_argument("--config", default="default")
    pa.add_argument("--method", choices=("dp", "coalition", "greedy", "exhaustive"),
                    default="coalition")
    pa.add_argument("--problem", default="p_alpha0")
    pa.add_argument("--alpha-db", type=float, default=0.0)
    pa.add_argument("--seed", type=int, default=0)
    pa.add_argument("--out", default="partition.json")
    pa.set_defaults(func=cmd_partition)

    cal = sub.add_parser("snr-calibration", help="average path loss of a scene")
    cal.add_argument("--config", default="default")
    cal.add_argument("--trials", type=int, default=2000)
    cal.add_argument("--seed", type=int, default=0)
    cal.set_defaults(func=cmd_snr_calibration)

    run = sub.add_parser("run", help="run an experiment config file")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--out", default=None)
    run.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
