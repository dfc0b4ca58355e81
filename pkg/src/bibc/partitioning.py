"""Access-point role selection: who emits the carrier, who reads.

For the unconstrained total-power problem the selection reduces to
balancing the per-AP channel gains across the two roles, an integer subset
sum solved exactly by dynamic programming.  All other problems use a
coalitional game: random-order switch operations that are kept only when
the inner beamforming utility strictly improves (and the interference
bound holds), followed by a pairwise swap refinement.  A greedy assignment
and an exhaustive oracle complete the toolbox.

Functions take any workspace exposing `ap_ids`, `ref_id`, `h_ap` and
`assemble(partition)` (see scene.SceneChannels).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from bibc.beamforming import BeamformerSolution, solve_problem
from bibc.rng import substream
from bibc.scene import Partition

# Problems whose switch/swap acceptance must also check the interference bound.
CONSTRAINED_PROBLEMS = {
    "p_dli",
    "p_dli_prime",
    "p_alpha0",
    "p_alpha0_prime_convex",
    "p_alpha0_prime_closed",
    "p_multi",
}

# Comparison thresholds: exact zero-forcing problems are checked against a
# finite floor, ratio-bounded problems against alpha plus a small margin.
NULL_CHECK_ALPHA = 1e-10          # -100 dB
DLI_CHECK_MARGIN = 10.0 ** 0.05   # +0.5 dB

MAX_EXHAUSTIVE_APS = 20
MAX_DP_CELLS = 200_000_000


@dataclass
class GameConfig:
    zeta_init: int = 30
    zeta_alg5: int = 4
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.zeta_init < 1 or self.zeta_alg5 < 1:
            raise ValueError("iteration budgets must be >= 1")


@dataclass
class UtilityResult:
    utility: float
    c_metric: float
    x: np.ndarray
    feasible: bool
    solution: BeamformerSolution | None = None


@dataclass
class DpTable:
    weights: dict[int, int]
    scale: float
    budget: int
    values: np.ndarray            # (L+1, Q+1) optimal weights
    take: np.ndarray              # (L, Q+1) inclusion choices


def check_alpha(problem: str, alpha: float | None) -> float | None:
    """Threshold used when verifying C(S) for a problem, None if unconstrained."""
    if problem not in CONSTRAINED_PROBLEMS:
        return None
    if problem in ("p_dli", "p_dli_prime"):
        if alpha is None:
            raise ValueError("interference-bounded problems need alpha")
        return alpha * DLI_CHECK_MARGIN
    return NULL_CHECK_ALPHA


def utility(
    workspace,
    partition: Partition,
    problem: str,
    p_max: float,
    alpha: float | None = None,
    delta=1.0,
    **solve_kwargs,
) -> UtilityResult:
    """Inner beamforming solve for one candidate partition.

    Utility is the backscatter energy (or the achieved min-SINR for the
    multi-device problem); an infeasible inner problem maps to zero utility
    with the infeasible flag set.
    """
    channels = workspace.assemble(partition)
    sol = solve_problem(problem, channels, p_max, alpha=alpha, delta=delta, **solve_kwargs)
    thr = check_alpha(problem, alpha)
    feasible = bool(sol.feasible) if problem == "p_multi" else True
    if thr is not None:
        feasible = feasible and sol.dli_metric <= thr
    u = sol.objective if feasible else 0.0
    return UtilityResult(u, sol.dli_metric, sol.x, feasible, sol)


def dp_partition(gains: dict[int, float], scale: float, ref_id: int) -> Partition:
    """Balance the per-AP gains by integer subset sum.

    Weights floor(scale * gain + 0.5) are packed as close to half the total
    as possible without exceeding it; the selected set becomes the reader
    side when it contains the reference AP, else the carrier side.  Ties in
    the recursion prefer excluding the current AP.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    if len(gains) < 2:
        raise ValueError("need at least two APs")
    if ref_id not in gains:
        raise ValueError("reference AP missing from gains")
    ids = sorted(gains)
    w = {}
    for i in ids:
        q = np.floor(scale * gains[i] + 0.5)
        if not np.isfinite(q) or q >= 2**62:
            raise OverflowError(f"integer weight overflow for AP {i}; reduce the scale")
        w[i] = int(q)
    total = sum(w.values())
    budget = total // 2
    L = len(ids)
    if (L + 1) * (budget + 1) > MAX_DP_CELLS:
        raise OverflowError("subset-sum table too large; reduce the scale")

    values = np.zeros((L + 1, budget + 1), dtype=np.int64)
    take = np.zeros((L, budget + 1), dtype=bool)
    for li, ap in enumerate(ids, start=1):
        q_l = w[ap]
        prev = values[li - 1]
        cur = prev.copy()
        if q_l <= budget:
            cand = prev[: budget + 1 - q_l] + q_l
            better = cand > prev[q_l:]
            cur[q_l:][better] = cand[better]
            take[li - 1, q_l:] = better
        elif q_l == 0:
            pass
        values[li] = cur

    selected = []
    q = budget
    for li in range(L, 0, -1):
        if take[li - 1, q]:
            selected.append(ids[li - 1])
            q -= w[ids[li - 1]]
    selected = set(selected)
    others = set(ids) - selected
    if ref_id in selected:
        readers, ces = selected, others
    else:
        readers, ces = others, selected
    if not ces:
        # all-zero weights or a degenerate split; peel the lightest non-ref AP
        movable = sorted(i for i in readers if i != ref_id)
        if not movable:
            raise ValueError("cannot form a carrier set")
        ces = {movable[0]}
        readers = readers - ces
    return Partition(ce_ids=tuple(ces), reader_ids=tuple(readers), ref_id=ref_id)


def dp_table(gains: dict[int, float], scale: float) -> DpTable:
    """Expose the filled recursion table (testing and diagnostics)."""
    ids = sorted(gains)
    w = {i: int(np.floor(scale * gains[i] + 0.5)) for i in ids}
    budget = sum(w.values()) // 2
    L = len(ids)
    values = np.zeros((L + 1, budget + 1), dtype=np.int64)
    take = np.zeros((L, budget + 1), dtype=bool)
    for li, ap in enumerate(ids, start=1):
        q_l = w[ap]
        prev = values[li - 1]
        cur = prev.copy()
        if 0 < q_l <= budget:
            cand = prev[: budget + 1 - q_l] + q_l
            better = cand > prev[q_l:]
            cur[q_l:][better] = cand[better]
            take[li - 1, q_l:] = better
        values[li] = cur
    return DpTable(weights=w, scale=scale, budget=budget, values=values, take=take)


def _random_partition(ap_ids, ref_id: int, rng) -> Partition:
    non_ref = [i for i in ap_ids if i != ref_id]
    while True:
        mask = rng.integers(0, 2, size=len(non_ref)).astype(bool)
        ces = [i for i, m in zip(non_ref, mask) if m]
        if ces:
            break
    readers = [ref_id] + [i for i, m in zip(non_ref, mask) if not m]
    return Partition(ce_ids=tuple(ces), reader_ids=tuple(readers), ref_id=ref_id)


def _switch(partition: Partition, ap: int) -> Partition | None:
    """Move one non-reference AP to the other side; None if it would empty
    its current side."""
    if ap == partition.ref_id:
        return None
    if ap in partition.ce_ids:
        if len(partition.ce_ids) == 1:
            return None
        return Partition(
            ce_ids=tuple(i for i in partition.ce_ids if i != ap),
            reader_ids=partition.reader_ids + (ap,),
            ref_id=partition.ref_id,
        )
    if len(partition.reader_ids) == 1:
        return None
    return Partition(
        ce_ids=partition.ce_ids + (ap,),
        reader_ids=tuple(i for i in partition.reader_ids if i != ap),
        ref_id=partition.ref_id,
    )


def coalition_game(
    workspace,
    initial: Partition,
    problem: str,
    p_max: float,
    alpha: float | None = None,
    delta=1.0,
    rng=None,
    max_passes: int = 200,
    **solve_kwargs,
) -> tuple[Partition, UtilityResult, list[float]]:
    """Random-order switch operations until a full pass accepts none.

    A switch is kept only when it strictly increases the utility and, for
    constrained problems, keeps C(S) within the bound (utility of a
    constraint-violating state counts as zero, so escaping violation is
    always an improvement)."""
    rng = rng if rng is not None else substream(0)
    thr = check_alpha(problem, alpha)
    current = initial
    cur = utility(workspace, current, problem, p_max, alpha, delta, **solve_kwargs)
    non_ref = [i for i in workspace.ap_ids if i != workspace.ref_id]
    trace = [cur.utility]
    for _ in range(max_passes):
        changed = False
        for ap in rng.permutation(non_ref):
            cand_partition = _switch(current, int(ap))
            if cand_partition is None:
                continue
            cand = utility(workspace, cand_partition, problem, p_max, alpha, delta, **solve_kwargs)
            accept = cand.utility > cur.utility
            if thr is not None:
                accept = accept and cand.c_metric <= thr
            if problem == "p_multi":
                accept = accept and cand.feasible
            if accept:
                current, cur = cand_partition, cand
                trace.append(cur.utility)
                changed = True
        if not changed:
            break
    return current, cur, trace


def swap_refine(
    workspace,
    partition: Partition,
    problem: str,
    p_max: float,
    alpha: float | None = None,
    delta=1.0,
    **solve_kwargs,
) -> tuple[Partition, UtilityResult]:
    """Try every carrier/reader pair once (reference AP never swaps); keep a
    swap iff the utility strictly improves under the constraint."""
    thr = check_alpha(problem, alpha)
    cur = utility(workspace, partition, problem, p_max, alpha, delta, **solve_kwargs)
    ce = list(partition.ce_ids)
    rd = list(partition.reader_ids)
    for i in range(len(ce)):
        for j in range(len(rd)):
            if rd[j] == partition.ref_id:
                continue
            new_ce = ce.copy()
            new_rd = rd.copy()
            new_ce[i], new_rd[j] = rd[j], ce[i]
            cand_partition = Partition(
                ce_ids=tuple(new_ce), reader_ids=tuple(new_rd), ref_id=partition.ref_id
            )
            cand = utility(workspace, cand_partition, problem, p_max, alpha, delta, **solve_kwargs)
            accept = cand.utility > cur.utility
            if thr is not None:
                accept = accept and cand.c_metric <= thr
            if problem == "p_multi":
                accept = accept and cand.feasible
            if accept:
                ce, rd = new_ce, new_rd
                cur = cand
    out = Partition(ce_ids=tuple(ce), reader_ids=tuple(rd), ref_id=partition.ref_id)
    return out, cur


def run_ap_selection(
    workspace,
    problem: str,
    config: GameConfig,
    p_max: float,
    alpha: float | None = None,
    delta=1.0,
    **solve_kwargs,
) -> tuple[Partition, UtilityResult, dict]:
    """Four-phase selection: randomized initialization honoring the
    constraint, switch game, restarts, swap refinement.

    All problems use the full `zeta_alg5` restart budget and keep the best
    outcome (preferring constraint-satisfying ones); a single random start
    stalls in a local switch optimum too often on irregular instances."""
    rng = substream(config.rng_seed)
    thr = check_alpha(problem, alpha)
    diagnostics = {"restarts": 0, "init_draws": []}

    def draw_initial():
        draws = 0
        while True:
            part = _random_partition(workspace.ap_ids, workspace.ref_id, rng)
            draws += 1
            if thr is None:
                return part, draws
            res = utility(workspace, part, problem, p_max, alpha, delta, **solve_kwargs)
            if res.c_metric <= thr and (problem != "p_multi" or res.feasible):
                return part, draws
            if draws >= config.zeta_init:
                return part, draws

    def ok(res: UtilityResult) -> bool:
        return bool(thr is None or res.c_metric <= thr) and (
            problem != "p_multi" or res.feasible
        )

    best: tuple[Partition, UtilityResult] | None = None
    for attempt in range(config.zeta_alg5):
        init, draws = draw_initial()
        diagnostics["init_draws"].append(draws)
        part, res, _ = coalition_game(
            workspace, init, problem, p_max, alpha, delta, rng=rng, **solve_kwargs
        )
        diagnostics["restarts"] = attempt + 1
        if best is None or (ok(res), res.utility) > (ok(best[1]), best[1].utility):
            best = (part, res)
    part, res = best
    phase2_utility = res.utility
    part, res = swap_refine(workspace, part, problem, p_max, alpha, delta, **solve_kwargs)
    diagnostics["phase2_utility"] = phase2_utility
    diagnostics["final_utility"] = res.utility
    diagnostics["constraint_met"] = bool(thr is None or res.c_metric <= thr)
    return part, res, diagnostics


def greedy_partition(
    workspace,
    problem: str,
    p_max: float,
    alpha: float | None = None,
    delta=1.0,
    seed: int = 0,
    **solve_kwargs,
) -> tuple[Partition, UtilityResult]:
    """Lightweight assignment: seed one random carrier, then give each AP in
    random order to the side with the higher feasible utility; APs feasible
    on neither side stay unassigned and default to the carrier side."""
    rng = substream(seed)
    thr = check_alpha(problem, alpha)
    non_ref = [i for i in workspace.ap_ids if i != workspace.ref_id]
    if not non_ref:
        raise ValueError("need at least one non-reference AP")
    first = int(rng.choice(non_ref))
    ce = {first}
    rd = {workspace.ref_id}
    pending = [int(a) for a in rng.permutation([i for i in non_ref if i != first])]
    unassigned = []
    for ap in pending:
        options = []
        for side in ("ce", "rd"):
            ces = ce | {ap} if side == "ce" else ce
            rds = rd | {ap} if side == "rd" else rd
            part = Partition(ce_ids=tuple(ces), reader_ids=tuple(rds), ref_id=workspace.ref_id)
            res = _partial_utility(workspace, part, problem, p_max, alpha, delta, **solve_kwargs)
            ok = thr is None or res.c_metric <= thr
            if problem == "p_multi":
                ok = ok and res.feasible
            if ok:
                options.append((res.utility, side))
        if not options:
            unassigned.append(ap)
            continue
        side = max(options, key=lambda t: t[0])[1]
        (ce if side == "ce" else rd).add(ap)
    ce |= set(unassigned)
    part = Partition(ce_ids=tuple(ce), reader_ids=tuple(rd), ref_id=workspace.ref_id)
    res = utility(workspace, part, problem, p_max, alpha, delta, **solve_kwargs)
    return part, res


class _SubsetWorkspace:
    """View of a workspace restricted to a subset of its APs."""

    def __init__(self, base, ids):
        self.base = base
        self.ap_ids = tuple(sorted(ids))
        self.ref_id = base.ref_id
        self.h_ap = {i: base.h_ap[i] for i in self.ap_ids}

    def assemble(self, partition: Partition):
        return self.base.assemble(partition, allow_partial=True)


def _partial_utility(workspace, partition, problem, p_max, alpha, delta, **solve_kwargs):
    sub = _SubsetWorkspace(workspace, partition.ce_ids + partition.reader_ids)
    return utility(sub, partition, problem, p_max, alpha, delta, **solve_kwargs)


def exhaustive_partition(
    workspace,
    problem: str,
    p_max: float,
    alpha: float | None = None,
    delta=1.0,
    **solve_kwargs,
) -> tuple[Partition, UtilityResult]:
    """Oracle: evaluate every partition with the reference AP reading and a
    non-empty carrier set; ties broken by lexicographically smallest
    carrier set."""
    ids = list(workspace.ap_ids)
    if len(ids) > MAX_EXHAUSTIVE_APS:
        raise ValueError(f"exhaustive search refused for more than {MAX_EXHAUSTIVE_APS} APs")
    thr = check_alpha(problem, alpha)
    non_ref = sorted(i for i in ids if i != workspace.ref_id)
    best = None
    for mask in range(1, 2 ** len(non_ref)):
        ces = tuple(non_ref[i] for i in range(len(non_ref)) if mask >> i & 1)
        rds = tuple(i for i in ids if i not in ces)
        part = Partition(ce_ids=ces, reader_ids=rds, ref_id=workspace.ref_id)
        res = utility(workspace, part, problem, p_max, alpha, delta, **solve_kwargs)
        if thr is not None and res.c_metric > thr:
            continue
        if problem == "p_multi" and not res.feasible:
            continue
        if best is None or res.utility > best[0].utility:
            best = (res, part)
        elif res.utility == best[0].utility and ces < best[1].ce_ids:
            best = (res, part)
    if best is None:
        raise ValueError("no feasible partition exists under the constraint")
    return best[1], best[0]
