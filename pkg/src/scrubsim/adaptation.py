"""Online adaptation against dynamic adversaries.

The adversary re-apportions a fixed traffic budget across ingresses and
attack types each epoch; the defender estimates the next mix one epoch
behind. Estimators: perturbed-mean (empirical average plus a decaying
uniform random component), previous-epoch replay, and a uniform spread.
Losses are wastage (overprovisioned Gbps / VM slots) and evasion (attack
Gbps that found no provision), reported per epoch and as normalized regret
against the best static provision in hindsight.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import numpy as np

from .defense_graphs import AnnotatedGraph, AttackType, graph_compute_factor, ordered_graphs
from .errors import InputError

STRATEGIES = ("randingress", "randattack", "randhybrid", "steady", "flipprevepoch")
ESTIMATORS = ("fpl", "prevepoch", "uniform")

# Regret denominators are floored at this fraction of the trace's cumulative
# attack volume so that a perfect static reference (loss ~0, e.g. against a
# steady adversary) yields large-but-finite normalized regret.
_REGRET_FLOOR_FRACTION = 0.01


@dataclass(frozen=True)
class Budget:
    b_gbps: float

    def __post_init__(self):
        if self.b_gbps <= 0:
            raise InputError("budget must be > 0")


def _gbps(budget: "Budget | float") -> float:
    return budget.b_gbps if isinstance(budget, Budget) else float(budget)


@dataclass(frozen=True)
class AdversaryStrategy:
    kind: str
    seed: int = 0

    def __post_init__(self):
        if self.kind not in STRATEGIES:
            raise InputError(f"unknown adversary strategy {self.kind!r}")


def _subset(rng: random.Random, n: int) -> list[int]:
    """Uniform random nonempty subset (each element in with probability 1/2,
    redrawn while empty)."""
    while True:
        picked = [i for i in range(n) if rng.random() < 0.5]
        if picked:
            return picked


def _steady_mix(seed_key: str, budget: float, n_pops: int, n_attacks: int) -> np.ndarray:
    rng = random.Random(seed_key)
    attack = rng.randrange(n_attacks)
    ingresses = _subset(rng, n_pops)
    mix = np.zeros((n_pops, n_attacks))
    for e in ingresses:
        mix[e, attack] = budget / len(ingresses)
    return mix


def adversary_next(strategy: AdversaryStrategy, budget: Budget, epoch: int,
                   n_pops: int, n_attacks: int,
                   rng: random.Random | None = None) -> np.ndarray:
    """The adversary's mix for this epoch; the full budget is always spent.

    Deterministic per (strategy seed, epoch): per-epoch randomness derives
    from the strategy seed unless an explicit rng is supplied.
    """
    if epoch < 0:
        raise InputError("epoch must be >= 0")
    b = budget.b_gbps
    if strategy.kind == "steady":
        return _steady_mix(f"{strategy.seed}:steady", b, n_pops, n_attacks)
    if strategy.kind == "flipprevepoch":
        first = _steady_mix(f"{strategy.seed}:flip0", b, n_pops, n_attacks)
        for retry in range(100):
            second = _steady_mix(f"{strategy.seed}:flip1:{retry}", b, n_pops, n_attacks)
            if not np.array_equal(first, second):
                break
        return first if epoch % 2 == 0 else second

    rng = rng if rng is not None else random.Random(f"{strategy.seed}:{epoch}")
    mix = np.zeros((n_pops, n_attacks))
    if strategy.kind == "randingress":
        ingresses = _subset(rng, n_pops)
        share = b / (len(ingresses) * n_attacks)
        for e in ingresses:
            mix[e, :] = share
    elif strategy.kind == "randattack":
        attacks = _subset(rng, n_attacks)
        share = b / (n_pops * len(attacks))
        for a in attacks:
            mix[:, a] = share
    else:  # randhybrid
        ingresses = _subset(rng, n_pops)
        attacks = _subset(rng, n_attacks)
        share = b / (len(ingresses) * len(attacks))
        for e in ingresses:
            for a in attacks:
                mix[e, a] = share
    return mix


@dataclass
class EstimatorState:
    kind: str
    n_pops: int
    n_attacks: int
    gamma: float = 1.0
    history: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ESTIMATORS:
            raise InputError(f"unknown estimator {self.kind!r}")
        if self.gamma < 1.0:
            raise InputError("gamma must be >= 1")

    def observe(self, mix: np.ndarray) -> None:
        self.history.append(np.array(mix, dtype=float))


def perturbation_bound(budget: float, next_epoch: int, n_pops: int, n_attacks: int) -> float:
    return 2.0 * budget / (next_epoch * n_pops * n_attacks)


def fpl_estimate(state: EstimatorState, budget: "Budget | float", n_pops: int,
                 n_attacks: int, rng: np.random.Generator) -> np.ndarray:
    """Empirical mean of past mixes plus an independent uniform perturbation
    per cell, drawn from [0, 2B / (nextEpoch * |E| * |A|)]."""
    next_epoch = len(state.history) + 1
    if state.history:
        mean = np.mean(state.history, axis=0)
    else:
        mean = np.zeros((n_pops, n_attacks))
    bound = perturbation_bound(_gbps(budget), next_epoch, n_pops, n_attacks)
    estimate = mean + rng.uniform(0.0, bound, size=(n_pops, n_attacks))
    return np.maximum(estimate, 0.0)


def prev_epoch_estimate(state: EstimatorState) -> np.ndarray:
    """Replay the last observed mix; all zeros before the first observation."""
    if not state.history:
        return np.zeros((state.n_pops, state.n_attacks))
    return np.array(state.history[-1], dtype=float)


def uniform_estimate(budget: "Budget | float", n_pops: int, n_attacks: int) -> np.ndarray:
    if n_pops < 1 or n_attacks < 1:
        raise InputError("need at least one pop and one attack type")
    return np.full((n_pops, n_attacks), _gbps(budget) / (n_pops * n_attacks))


def estimate(state: EstimatorState, budget: Budget,
             rng: np.random.Generator | None = None) -> np.ndarray:
    if state.kind == "fpl":
        if rng is None:
            raise InputError("fpl estimator needs an rng")
        return fpl_estimate(state, budget, state.n_pops, state.n_attacks, rng)
    if state.kind == "prevepoch":
        return prev_epoch_estimate(state)
    return uniform_estimate(budget, state.n_pops, state.n_attacks)


def loss_accounting(provisioned: np.ndarray, actual: np.ndarray,
                    lib: dict[AttackType, AnnotatedGraph]) -> tuple[float, float, float]:
    """Per-epoch losses: (wastage_gbps, evasion_gbps, wastage_vm_slots).

    Wastage is provision beyond the realized attack; evasion is attack
    volume beyond the provision. VM-slot wastage converts each attack
    column's wasted Gbps through its graph's compute factor.
    """
    provisioned = np.asarray(provisioned, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if provisioned.shape != actual.shape:
        raise InputError("provisioned and actual shapes differ")
    wast = np.maximum(provisioned - actual, 0.0)
    evas = np.maximum(actual - provisioned, 0.0)
    factors = np.array([graph_compute_factor(g) for g in ordered_graphs(lib)])
    wast_vm = float((wast.sum(axis=0) * factors).sum())
    return float(wast.sum()), float(evas.sum()), wast_vm


def best_static_hindsight(trace: list[np.ndarray]) -> tuple[np.ndarray, float]:
    """Best single provision matrix for the whole trace, minimizing total
    wastage + evasion.

    That loss is cellwise L1, so a per-cell search over the observed values
    (the median sits on one) plus the mean is exact; the grid is kept anyway
    as a guard and for documentation.
    """
    if not trace:
        raise InputError("trace must be nonempty")
    stack = np.stack([np.asarray(m, dtype=float) for m in trace])
    n_t, n_e, n_a = stack.shape
    static = np.zeros((n_e, n_a))
    total = 0.0
    for e in range(n_e):
        for a in range(n_a):
            series = stack[:, e, a]
            candidates = sorted(set(series.tolist()) | {float(series.mean())})
            best_v, best_loss = 0.0, float("inf")
            for v in candidates:
                loss = float(np.abs(series - v).sum())
                if loss < best_loss - 1e-12:
                    best_v, best_loss = v, loss
            static[e, a] = best_v
            total += best_loss
    return static, total


@dataclass
class RegretReport:
    wastage_gbps: list[float]
    evasion_gbps: list[float]
    wastage_vm: list[float]
    cumulative_g1_vm: float  # goal 1: defender resource overconsumption
    cumulative_g2_gbps: float  # goal 2: delivered attack volume
    static_loss_combined: float
    static_wastage_gbps: float
    static_evasion_gbps: float
    regret_combined: float
    regret_g1: float
    regret_g2: float


def normalized_regret(trace: list[np.ndarray], wastage_gbps: list[float],
                      evasion_gbps: list[float], wastage_vm: list[float],
                      lib: dict[AttackType, AnnotatedGraph]) -> RegretReport:
    """Regret of an estimator's realized losses against the best static
    provision in hindsight, normalized by the static strategy's own loss.

    Reported per goal (G1 wastage, G2 evasion) and combined; the static
    reference minimizes the combined wastage + evasion.
    """
    if len(trace) != len(wastage_gbps) or len(trace) != len(evasion_gbps):
        raise InputError("loss series must align with the trace")
    static, static_loss = best_static_hindsight(trace)
    s_wast = s_evas = 0.0
    for mix in trace:
        w, v, _ = loss_accounting(static, mix, lib)
        s_wast += w
        s_evas += v
    est_w = float(sum(wastage_gbps))
    est_v = float(sum(evasion_gbps))
    combined = est_w + est_v
    floor = _REGRET_FLOOR_FRACTION * float(sum(m.sum() for m in trace))

    def ratio(loss: float, ref: float) -> float:
        return (loss - ref) / max(ref, floor, 1e-12)

    return RegretReport(
        wastage_gbps=list(wastage_gbps),
        evasion_gbps=list(evasion_gbps),
        wastage_vm=list(wastage_vm),
        cumulative_g1_vm=float(sum(wastage_vm)),
        cumulative_g2_gbps=est_v,
        static_loss_combined=static_loss,
        static_wastage_gbps=s_wast,
        static_evasion_gbps=s_evas,
        regret_combined=ratio(combined, static_loss),
        regret_g1=ratio(est_w, s_wast),
        regret_g2=ratio(est_v, s_evas),
    )


def run_estimator_on_trace(kind: str, trace: list[np.ndarray], budget: Budget,
                           lib: dict[AttackType, AnnotatedGraph],
                           seed: int = 0, gamma: float = 1.0) -> RegretReport:
    """Feed a fixed adversary trace through an estimator with the one-epoch
    observation lag and account the losses."""
    if not trace:
        raise InputError("trace must be nonempty")
    n_pops, n_attacks = trace[0].shape
    state = EstimatorState(kind=kind, n_pops=n_pops, n_attacks=n_attacks, gamma=gamma)
    wast, evas, wvm = [], [], []
    for t, mix in enumerate(trace):
        rng = np.random.default_rng([seed, t]) if kind == "fpl" else None
        provision = estimate(state, budget, rng) * gamma
        w, v, m = loss_accounting(provision, mix, lib)
        wast.append(w)
        evas.append(v)
        wvm.append(m)
        state.observe(mix)
    return normalized_regret(trace, wast, evas, wvm, lib)


def per_epoch_regret_report(strategy_kind: str, estimator_kind: str,
                            n_pops: int, budget: Budget,
                            lib: dict[AttackType, AnnotatedGraph], epochs: int,
                            seeds: list[int],
                            gamma: float = 1.0) -> list[dict[str, float]]:
    """Per-epoch loss series for one strategy/estimator pair, averaged over
    seeds: wastage, evasion, VM wastage, per-goal running cumulatives, and
    regret accruing against the full-trace hindsight static (so the final
    row equals the trace's normalized regret)."""
    n_attacks = len(lib)
    per_seed: list[list[dict[str, float]]] = []
    for seed in seeds:
        strat = AdversaryStrategy(kind=strategy_kind, seed=seed)
        trace = [adversary_next(strat, budget, t, n_pops, n_attacks)
                 for t in range(epochs)]
        static, _static_loss = best_static_hindsight(trace)
        state = EstimatorState(kind=estimator_kind, n_pops=n_pops,
                               n_attacks=n_attacks, gamma=gamma)
        rows = []
        cum_w = cum_v = cum_vm = 0.0
        s_w = s_v = 0.0
        volume = 0.0
        for t, mix in enumerate(trace):
            rng = np.random.default_rng([seed, t]) if estimator_kind == "fpl" else None
            provision = estimate(state, budget, rng) * gamma
            w, v, m = loss_accounting(provision, mix, lib)
            state.observe(mix)
            cum_w += w
            cum_v += v
            cum_vm += m
            pw, pv, _pm = loss_accounting(static, mix, lib)
            s_w += pw
            s_v += pv
            volume += float(mix.sum())
            floor = _REGRET_FLOOR_FRACTION * volume
            rows.append({
                "epoch": float(t),
                "wastage_gbps": w,
                "evasion_gbps": v,
                "wastage_vm": m,
                "cum_g1_vm": cum_vm,
                "cum_g2_gbps": cum_v,
                "regret_combined": (cum_w + cum_v - s_w - s_v)
                                   / max(s_w + s_v, floor, 1e-12),
                "regret_g1": (cum_w - s_w) / max(s_w, floor, 1e-12),
                "regret_g2": (cum_v - s_v) / max(s_v, floor, 1e-12),
            })
        per_seed.append(rows)
    averaged = []
    for t in range(epochs):
        keys = per_seed[0][t].keys()
        averaged.append({
            k: (float(t) if k == "epoch"
                else float(np.mean([rows[t][k] for rows in per_seed])))
            for k in keys
        })
    return averaged


@dataclass
class RegretTableRow:
    strategy: str
    estimator: str
    mean_regret_combined: float
    mean_regret_g1: float
    mean_regret_g2: float
    mean_wastage_gbps: float
    mean_evasion_gbps: float


def regret_experiment(n_pops: int, budget: Budget,
                      lib: dict[AttackType, AnnotatedGraph], epochs: int,
                      seeds: list[int],
                      strategies: tuple[str, ...] = STRATEGIES,
                      estimators: tuple[str, ...] = ESTIMATORS,
                      gamma: float = 1.0) -> list[RegretTableRow]:
    """Sweep adversary strategies x estimators; each seed fixes one adversary
    trace that every estimator replays, so regrets share the same hindsight
    reference."""
    n_attacks = len(lib)
    rows = []
    for strat_kind in strategies:
        per_estimator: dict[str, list[RegretReport]] = {k: [] for k in estimators}
        for seed in seeds:
            strat = AdversaryStrategy(kind=strat_kind, seed=seed)
            trace = [adversary_next(strat, budget, t, n_pops, n_attacks)
                     for t in range(epochs)]
            for est_kind in estimators:
                per_estimator[est_kind].append(
                    run_estimator_on_trace(est_kind, trace, budget, lib,
                                           seed=seed, gamma=gamma))
        for est_kind in estimators:
            reports = per_estimator[est_kind]
            rows.append(RegretTableRow(
                strategy=strat_kind,
                estimator=est_kind,
                mean_regret_combined=float(np.mean([r.regret_combined for r in reports])),
                mean_regret_g1=float(np.mean([r.regret_g1 for r in reports])),
                mean_regret_g2=float(np.mean([r.regret_g2 for r in reports])),
                mean_wastage_gbps=float(np.mean([sum(r.wastage_gbps) for r in reports])),
                mean_evasion_gbps=float(np.mean([sum(r.evasion_gbps) for r in reports])),
            ))
    return rows
