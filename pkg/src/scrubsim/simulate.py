"""Epoch-driven simulation: adversary -> lagged observation -> estimator ->
resource manager -> orchestration -> losses, with CSV/JSON report emitters.

Each epoch the adversary emits a mix, the estimator sees only strictly
earlier epochs, the resource manager provisions for the estimate, the
orchestrator compiles the forwarding plan, and losses are scored against
the actual mix. Placement or capacity shortfalls are recorded in the epoch
record; they never abort a run.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .adaptation import (
    AdversaryStrategy,
    Budget,
    EstimatorState,
    adversary_next,
    estimate,
    loss_accounting,
)
from .defense_graphs import (
    AnnotatedGraph,
    AttackType,
    builtin_library,
    load_library,
    ordered_graphs,
)
from .errors import InputError, PlacementError
from .orchestration import build_tag_pools, pin_bidirectional_for_graph, synthesize_rules
from .resource_manager import (
    check_feasibility,
    dsp_greedy,
    evaluate_cost,
    overprovision,
    place_all,
)
from .topology import CostParams, Topology, generate_topology, load_topology

SCENARIO_SCHEMA_VERSION = 1

CSV_COLUMNS = [
    "epoch", "actual_gbps", "estimate_gbps", "t_left", "handled_gbps",
    "cost", "vm_total", "tag_rules", "wastage_gbps", "evasion_gbps",
    "wastage_vm", "infeasible",
]


@dataclass
class Scenario:
    epochs: int
    budget_gbps: float
    adversary: str
    estimator: str
    seed: int = 0
    seeds: list[int] | None = None
    gamma: float = 1.0
    topology_nodes: int = 24
    dc_slots: int = 4000
    topology_path: str | None = None
    graphs_path: str | None = None
    cost: CostParams = field(default_factory=CostParams)

    def __post_init__(self):
        if self.epochs < 1:
            raise InputError("epochs must be >= 1")
        if self.budget_gbps <= 0:
            raise InputError("budget must be > 0")

    def load_topology(self) -> Topology:
        if self.topology_path:
            return load_topology(self.topology_path)
        return generate_topology(self.topology_nodes, self.dc_slots, seed=self.seed)

    def load_library(self) -> dict[AttackType, AnnotatedGraph]:
        if self.graphs_path:
            return load_library(self.graphs_path)
        return builtin_library()

    @classmethod
    def from_config(cls, cfg: dict) -> "Scenario":
        version = cfg.get("version", SCENARIO_SCHEMA_VERSION)
        if version != SCENARIO_SCHEMA_VERSION:
            raise InputError(f"unsupported scenario schema version {version}")
        cost_cfg = cfg.get("cost", {})
        try:
            return cls(
                epochs=int(cfg["epochs"]),
                budget_gbps=float(cfg["budget_gbps"]),
                adversary=str(cfg["adversary"]),
                estimator=str(cfg["estimator"]),
                seed=int(cfg.get("seed", 0)),
                seeds=[int(s) for s in cfg["seeds"]] if "seeds" in cfg else None,
                gamma=float(cfg.get("gamma", 1.0)),
                topology_nodes=int(cfg.get("topology_nodes", 24)),
                dc_slots=int(cfg.get("dc_slots", 4000)),
                topology_path=cfg.get("topology_path"),
                graphs_path=cfg.get("graphs_path"),
                cost=CostParams(
                    alpha=float(cost_cfg.get("alpha", 1.0)),
                    intra_unit_cost=float(cost_cfg.get("intra_unit_cost", 1.0)),
                    inter_unit_cost=float(cost_cfg.get("inter_unit_cost", 5.0)),
                    beta=float(cost_cfg.get("beta", 1.0)),
                ),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed scenario config: {exc}") from exc


@dataclass
class EpochRecord:
    epoch: int
    actual: np.ndarray
    estimate: np.ndarray
    t_left: float
    handled_gbps: float
    cost: float
    vm_total: int
    tag_rules: int
    wastage_gbps: float
    evasion_gbps: float
    wastage_vm: float
    infeasible: str = ""

    def csv_row(self) -> list:
        return [
            self.epoch,
            f"{float(self.actual.sum()):.6f}",
            f"{float(self.estimate.sum()):.6f}",
            f"{self.t_left:.6f}",
            f"{self.handled_gbps:.6f}",
            f"{self.cost:.6f}",
            self.vm_total,
            self.tag_rules,
            f"{self.wastage_gbps:.6f}",
            f"{self.evasion_gbps:.6f}",
            f"{self.wastage_vm:.6f}",
            self.infeasible,
        ]


def run_simulation(sc: Scenario, seed: int | None = None) -> list[EpochRecord]:
    """One seeded simulation run; fully deterministic per (scenario, seed)."""
    seed = sc.seed if seed is None else seed
    topo = sc.load_topology()
    lib = sc.load_library()
    graphs = ordered_graphs(lib)
    n_pops, n_attacks = len(topo.pops), len(graphs)
    budget = Budget(sc.budget_gbps)
    strategy = AdversaryStrategy(kind=sc.adversary, seed=seed)
    state = EstimatorState(kind=sc.estimator, n_pops=n_pops,
                           n_attacks=n_attacks, gamma=sc.gamma)

    records: list[EpochRecord] = []
    for t in range(sc.epochs):
        actual = adversary_next(strategy, budget, t, n_pops, n_attacks)
        rng = np.random.default_rng([seed, 104729, t]) if sc.estimator == "fpl" else None
        est = estimate(state, budget, rng)
        # The overprovision cushion multiplies the resource manager's VM
        # counts; losses are scored against the cushioned capacity.
        provision = est * sc.gamma

        infeasible = ""
        dsp = overprovision(dsp_greedy(topo, est, lib), sc.gamma, lib)
        cost = float("nan")
        tag_rules = 0
        try:
            ssps = place_all(topo, dsp, lib)
            cost = evaluate_cost(dsp, ssps, sc.cost)
            pools = build_tag_pools(dsp.physical, lib)
            plan = synthesize_rules(dsp, ssps, pools, topo, lib)
            for pg in dsp.physical.values():
                pin_bidirectional_for_graph(plan, pg, pools, lib)
            tag_rules = plan.max_switch_rules()
        except PlacementError as exc:
            infeasible = f"placement: {exc}"
        if dsp.t_left > 1e-9:
            note = f"t_left={dsp.t_left:.3f}"
            infeasible = f"{infeasible}; {note}" if infeasible else note

        w, v, wvm = loss_accounting(provision, actual, lib)
        records.append(EpochRecord(
            epoch=t, actual=actual, estimate=est, t_left=dsp.t_left,
            handled_gbps=float(est.sum()) - dsp.t_left, cost=cost,
            vm_total=dsp.total_vms(), tag_rules=tag_rules,
            wastage_gbps=w, evasion_gbps=v, wastage_vm=wvm,
            infeasible=infeasible,
        ))
        state.observe(actual)
    return records


def run_scenario_sweep(sc: Scenario, max_workers: int = 4) -> dict[int, list[EpochRecord]]:
    """Fan seeds out across worker threads; the merge is an ordered reduce,
    so results are independent of scheduling."""
    seeds = sc.seeds if sc.seeds else [sc.seed]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = {seed: pool.submit(run_simulation, sc, seed) for seed in seeds}
        return {seed: futures[seed].result() for seed in sorted(futures)}


def provisioning_comparison(demand_series: list[list[float]]) -> tuple[float, float]:
    """Static-peak versus elastic hardware footprint over a demand series.

    Static provisions every epoch at each attack type's peak demand; elastic
    provisions exactly what each epoch needs. Both totals are in
    Gbps-epochs.
    """
    if not demand_series:
        raise InputError("demand series must be nonempty")
    arr = np.asarray(demand_series, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    epochs = arr.shape[0]
    static_peak = float(epochs * arr.max(axis=0).sum())
    elastic = float(arr.sum())
    return static_peak, elastic


def emit_report(records: list[EpochRecord], out_dir: str,
                summary_extra: dict | None = None) -> tuple[str, str]:
    """Write epochs.csv (one row per epoch) and summary.json (column totals
    plus optional extras). Output is byte-stable for a fixed record list."""
    if not records:
        raise InputError("no records to report")
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "epochs.csv")
    json_path = os.path.join(out_dir, "summary.json")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow(rec.csv_row())
    totals = {
        "epochs": len(records),
        "actual_gbps": round(sum(float(r.actual.sum()) for r in records), 6),
        "t_left": round(sum(r.t_left for r in records), 6),
        "wastage_gbps": round(sum(r.wastage_gbps for r in records), 6),
        "evasion_gbps": round(sum(r.evasion_gbps for r in records), 6),
        "wastage_vm": round(sum(r.wastage_vm for r in records), 6),
        "vm_total": sum(r.vm_total for r in records),
        "infeasible_epochs": sum(1 for r in records if r.infeasible),
    }
    summary = {"totals": totals}
    if summary_extra:
        summary.update(summary_extra)
    with open(json_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, json_path


def verify_records_feasible(sc: Scenario, seed: int | None = None,
                            epochs: int | None = None) -> int:
    """Re-run a scenario and recheck every epoch's resource assignment with
    the constraint checker; returns the number of violations found."""
    seed = sc.seed if seed is None else seed
    topo = sc.load_topology()
    lib = sc.load_library()
    budget = Budget(sc.budget_gbps)
    strategy = AdversaryStrategy(kind=sc.adversary, seed=seed)
    state = EstimatorState(kind=sc.estimator, n_pops=len(topo.pops),
                           n_attacks=len(lib), gamma=sc.gamma)
    n_violations = 0
    for t in range(epochs if epochs is not None else sc.epochs):
        actual = adversary_next(strategy, budget, t, len(topo.pops), len(lib))
        rng = np.random.default_rng([seed, 104729, t]) if sc.estimator == "fpl" else None
        est = estimate(state, budget, rng)
        dsp = overprovision(dsp_greedy(topo, est, lib), sc.gamma, lib)
        try:
            ssps = place_all(topo, dsp, lib)
        except PlacementError:
            state.observe(actual)
            continue
        n_violations += len(check_feasibility(topo, est, dsp, ssps, sc.cost, lib))
        state.observe(actual)
    return n_violations
