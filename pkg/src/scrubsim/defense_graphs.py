"""Defense strategy graphs: annotated DAGs of analysis/response modules.

An annotated graph carries per-edge traffic fractions (relative to the
graph's total input) and per-module VM processing capacities. VM demand can
be computed module-by-module (fine-grained scaling) or by replicating the
whole graph as a unit (monolithic scaling).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .errors import InputError

ANALYSIS = "analysis"
RESPONSE = "response"

# Default per-VM throughput (Gbps): analysis does deep inspection and is
# heavier than response actions like logging or dropping.
DEFAULT_P = {ANALYSIS: 5.0, RESPONSE: 10.0}

_CEIL_EPS = 1e-9


@dataclass(frozen=True)
class AttackType:
    id: int
    name: str


@dataclass(frozen=True)
class LogicalModule:
    id: int
    name: str
    kind: str  # "analysis" | "response"
    capacity_gbps: float  # per-VM processing capacity for this module
    contexts: int = 1  # distinct output tags this module emits
    delivers: bool = False  # has a forward-to-customer output

    def __post_init__(self):
        if self.kind not in (ANALYSIS, RESPONSE):
            raise InputError(f"module {self.name}: unknown kind {self.kind!r}")
        if self.capacity_gbps <= 0:
            raise InputError(f"module {self.name}: capacity must be > 0")
        if self.contexts < 1:
            raise InputError(f"module {self.name}: contexts must be >= 1")


@dataclass
class AnnotatedGraph:
    attack: AttackType
    nodes: list[LogicalModule]
    edges: list[tuple[int, int, float]]  # (src node id, dst node id, weight)
    bidirectional: bool = False
    # External input fraction per root; defaults to an even split over roots.
    root_fractions: dict[int, float] | None = None

    def __post_init__(self):
        self._by_id = {n.id: n for n in self.nodes}
        self.validate()

    def node(self, i: int) -> LogicalModule:
        try:
            return self._by_id[i]
        except KeyError:
            raise InputError(f"unknown node id {i} in {self.attack.name} graph") from None

    def predecessors(self, i: int) -> list[int]:
        return [s for s, d, _w in self.edges if d == i]

    def successors(self, i: int) -> list[int]:
        return sorted(d for s, d, _w in self.edges if s == i)

    @property
    def roots(self) -> list[int]:
        have_pred = {d for _s, d, _w in self.edges}
        return [n.id for n in self.nodes if n.id not in have_pred]

    def external_fraction(self, i: int) -> float:
        roots = self.roots
        if i not in roots:
            return 0.0
        if self.root_fractions is not None:
            return self.root_fractions.get(i, 0.0)
        return 1.0 / len(roots)

    def share(self, i: int) -> float:
        """Fraction of the graph's total input traffic this node processes."""
        self.node(i)
        incoming = sum(w for _s, d, w in self.edges if d == i)
        return incoming if incoming > 0 or i not in self.roots else self.external_fraction(i)

    def validate(self) -> None:
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise InputError(f"{self.attack.name}: duplicate node ids")
        if not self.nodes:
            raise InputError(f"{self.attack.name}: graph has no nodes")
        for s, d, w in self.edges:
            if s not in self._by_id or d not in self._by_id:
                raise InputError(f"{self.attack.name}: edge ({s},{d}) references unknown node")
            if not (0.0 <= w <= 1.0):
                raise InputError(f"{self.attack.name}: edge ({s},{d}) weight {w} outside [0,1]")
        self._check_acyclic()
        roots = self.roots
        if not roots:
            raise InputError(f"{self.attack.name}: graph has no root (cycle?)")
        total_root = sum(self.external_fraction(r) for r in roots)
        if abs(total_root - 1.0) > 1e-9:
            raise InputError(f"{self.attack.name}: root fractions sum to {total_root}, expected 1.0")
        # Traffic may shrink at a node (drops) but never amplify.
        for n in self.nodes:
            out = sum(w for s, _d, w in self.edges if s == n.id)
            if out > self.share(n.id) + 1e-9:
                raise InputError(
                    f"{self.attack.name}: node {n.name} emits {out:.4f} "
                    f"but only receives {self.share(n.id):.4f}"
                )
        for n in self.nodes:
            needed = len(self.successors(n.id)) + (1 if n.delivers else 0)
            if n.contexts < max(needed, 1):
                raise InputError(
                    f"{self.attack.name}: node {n.name} needs >= {needed} contexts, has {n.contexts}"
                )

    def _check_acyclic(self) -> None:
        indeg = {n.id: 0 for n in self.nodes}
        for _s, d, _w in self.edges:
            indeg[d] += 1
        queue = sorted(i for i, k in indeg.items() if k == 0)
        seen = 0
        while queue:
            u = queue.pop(0)
            seen += 1
            for s, d, _w in self.edges:
                if s == u:
                    indeg[d] -= 1
                    if indeg[d] == 0:
                        queue.append(d)
        if seen != len(self.nodes):
            raise InputError(f"{self.attack.name}: graph contains a cycle")

    def topo_order(self) -> list[int]:
        order = []
        indeg = {n.id: 0 for n in self.nodes}
        for _s, d, _w in self.edges:
            indeg[d] += 1
        queue = sorted(i for i, k in indeg.items() if k == 0)
        while queue:
            u = queue.pop(0)
            order.append(u)
            for s, d, _w in self.edges:
                if s == u:
                    indeg[d] -= 1
                    if indeg[d] == 0:
                        queue.append(d)
            queue.sort()
        return order


@dataclass
class VmInstance:
    node_id: int
    index: int
    server: tuple[int, int] | None = None  # (rack id, server id) once placed


@dataclass
class PhysicalGraph:
    attack: AttackType
    dc_id: int
    traffic_gbps: float
    instances: dict[int, list[VmInstance]] = field(default_factory=dict)

    def vm_count(self, node_id: int) -> int:
        return len(self.instances.get(node_id, []))

    @property
    def total_vms(self) -> int:
        return sum(len(v) for v in self.instances.values())


def node_demand_vms(g: AnnotatedGraph, i: int, t_gbps: float) -> int:
    """Minimum VM count so aggregate capacity covers the node's traffic share."""
    if t_gbps < 0:
        raise InputError("t_gbps must be >= 0")
    load = t_gbps * g.share(i)
    if load <= 0:
        return 0
    return math.ceil(load / g.node(i).capacity_gbps - _CEIL_EPS)


def graph_compute_factor(g: AnnotatedGraph) -> float:
    """VM slots required per Gbps of input traffic to the graph."""
    return sum(g.share(n.id) / n.capacity_gbps for n in g.nodes)


def monolithic_demand_vms(g: AnnotatedGraph, t_gbps: float) -> int:
    """Number of whole-graph replicas needed when the graph scales as a unit.

    A replica's throughput is pinned by its bottleneck module; each replica
    deploys every module, so total VMs are this count times len(g.nodes).
    """
    if t_gbps < 0:
        raise InputError("t_gbps must be >= 0")
    if t_gbps == 0:
        return 0
    bottleneck = min(
        n.capacity_gbps / g.share(n.id) for n in g.nodes if g.share(n.id) > 0
    )
    return math.ceil(t_gbps / bottleneck - _CEIL_EPS)


def build_physical_graph(g: AnnotatedGraph, dc_id: int, t_gbps: float,
                         counts: dict[int, int]) -> PhysicalGraph:
    instances = {
        i: [VmInstance(node_id=i, index=k) for k in range(c)]
        for i, c in sorted(counts.items())
        if c > 0
    }
    return PhysicalGraph(attack=g.attack, dc_id=dc_id, traffic_gbps=t_gbps,
                         instances=instances)


# ---------------------------------------------------------------------------
# Built-in defense library

SYN_FLOOD = AttackType(0, "syn_flood")
DNS_AMPLIFICATION = AttackType(1, "dns_amplification")
UDP_FLOOD = AttackType(2, "udp_flood")
ELEPHANT_FLOW = AttackType(3, "elephant_flow")

BUILTIN_ATTACKS = (SYN_FLOOD, DNS_AMPLIFICATION, UDP_FLOOD, ELEPHANT_FLOW)


def builtin_library() -> dict[AttackType, AnnotatedGraph]:
    """Four stock defense graphs with documented default weights and
    capacities (analysis 5 Gbps/VM, response 10 Gbps/VM; splits even unless
    a published figure gives the fraction, e.g. 0.52/0.48 for UDP).
    """
    pa, pr = DEFAULT_P[ANALYSIS], DEFAULT_P[RESPONSE]
    third = 1.0 / 3.0

    syn = AnnotatedGraph(
        attack=SYN_FLOOD,
        nodes=[
            LogicalModule(0, "a_syn", ANALYSIS, pa, contexts=3),
            LogicalModule(1, "r_ok", RESPONSE, pr, contexts=1, delivers=True),
            LogicalModule(2, "r_syn_proxy", RESPONSE, pr, contexts=1, delivers=True),
            LogicalModule(3, "r_drop", RESPONSE, pr, contexts=1),
        ],
        edges=[(0, 1, third), (0, 2, third), (0, 3, third)],
    )
    dns = AnnotatedGraph(
        attack=DNS_AMPLIFICATION,
        nodes=[
            LogicalModule(0, "a_lightcheck", ANALYSIS, pa, contexts=2),
            LogicalModule(1, "a_match_request", ANALYSIS, pa, contexts=2),
            LogicalModule(2, "r_forward", RESPONSE, pr, contexts=1, delivers=True),
            LogicalModule(3, "r_log", RESPONSE, pr, contexts=1),
            LogicalModule(4, "r_drop", RESPONSE, pr, contexts=1),
        ],
        edges=[(0, 1, 0.5), (0, 2, 0.5), (1, 3, 0.25), (1, 4, 0.25)],
        bidirectional=True,
    )
    udp = AnnotatedGraph(
        attack=UDP_FLOOD,
        nodes=[
            LogicalModule(0, "a_udp", ANALYSIS, pa, contexts=2),
            LogicalModule(1, "r_ok", RESPONSE, pr, contexts=1, delivers=True),
            LogicalModule(2, "r_log", RESPONSE, pr, contexts=1),
            LogicalModule(3, "r_limit", RESPONSE, pr, contexts=1, delivers=True),
        ],
        edges=[(0, 1, 0.52), (0, 2, 0.48), (2, 3, 0.48)],
    )
    elephant = AnnotatedGraph(
        attack=ELEPHANT_FLOW,
        nodes=[
            LogicalModule(0, "a_elephant", ANALYSIS, pa, contexts=2),
            LogicalModule(1, "r_drop", RESPONSE, pr, contexts=1),
            LogicalModule(2, "r_forward", RESPONSE, pr, contexts=1, delivers=True),
        ],
        edges=[(0, 1, 0.5), (0, 2, 0.5)],
    )
    return {g.attack: g for g in (syn, dns, udp, elephant)}


def ordered_graphs(lib: dict[AttackType, AnnotatedGraph]) -> list[AnnotatedGraph]:
    """Graphs sorted by attack id; attack ids must be dense from 0."""
    graphs = sorted(lib.values(), key=lambda g: g.attack.id)
    for k, g in enumerate(graphs):
        if g.attack.id != k:
            raise InputError("attack ids must be dense from 0")
    return graphs


# ---------------------------------------------------------------------------
# Graph config files (JSON)

def graph_to_config(g: AnnotatedGraph) -> dict:
    return {
        "attack": {"id": g.attack.id, "name": g.attack.name},
        "bidirectional": g.bidirectional,
        "nodes": [
            {
                "id": n.id, "name": n.name, "kind": n.kind,
                "capacity_gbps": n.capacity_gbps, "contexts": n.contexts,
                "delivers": n.delivers,
            }
            for n in g.nodes
        ],
        "edges": [{"from": s, "to": d, "weight": w} for s, d, w in g.edges],
    }


def graph_from_config(cfg: dict) -> AnnotatedGraph:
    try:
        attack = AttackType(int(cfg["attack"]["id"]), str(cfg["attack"]["name"]))
        nodes = [
            LogicalModule(
                id=int(n["id"]), name=str(n["name"]), kind=str(n["kind"]),
                capacity_gbps=float(n["capacity_gbps"]),
                contexts=int(n.get("contexts", 1)),
                delivers=bool(n.get("delivers", False)),
            )
            for n in cfg["nodes"]
        ]
        edges = [(int(e["from"]), int(e["to"]), float(e["weight"])) for e in cfg["edges"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed graph config: {exc}") from exc
    return AnnotatedGraph(attack=attack, nodes=nodes, edges=edges,
                          bidirectional=bool(cfg.get("bidirectional", False)))


def load_library(path: str) -> dict[AttackType, AnnotatedGraph]:
    with open(path) as fh:
        data = json.load(fh)
    graphs = [graph_from_config(item) for item in data["graphs"]]
    return {g.attack: g for g in graphs}


def save_library(lib: dict[AttackType, AnnotatedGraph], path: str) -> None:
    data = {"graphs": [graph_to_config(g) for g in ordered_graphs(lib)]}
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
