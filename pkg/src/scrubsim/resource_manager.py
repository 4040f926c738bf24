"""Hierarchical resource management: datacenter selection (DSP) and server
selection (SSP) greedies, solution cost evaluation, and a constraint checker
mirroring the optimal formulation's feasibility conditions.

All operations are pure functions of their inputs and deterministic: ties
break toward the lowest datacenter/server/node id and the lowest (pop,
attack) pair.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .defense_graphs import (
    AnnotatedGraph,
    AttackType,
    PhysicalGraph,
    build_physical_graph,
    graph_compute_factor,
    ordered_graphs,
)
from .errors import InputError, PlacementError
from .topology import CostParams, Datacenter, Topology

EPS = 1e-9
_CEIL_EPS = 1e-9


def validate_traffic(traffic: np.ndarray, topo: Topology,
                     lib: dict[AttackType, AnnotatedGraph]) -> np.ndarray:
    traffic = np.asarray(traffic, dtype=float)
    expected = (len(topo.pops), len(lib))
    if traffic.shape != expected:
        raise InputError(f"traffic shape {traffic.shape} != (pops, attacks) {expected}")
    if (traffic < 0).any():
        raise InputError("traffic volumes must be >= 0")
    return traffic


@dataclass
class DspResult:
    f: np.ndarray  # (E, A, D) fraction of T[e][a] sent to datacenter d
    n_dc: dict[tuple[int, int], dict[int, int]]  # (dc, attack) -> node -> VM count
    demand: dict[tuple[int, int], dict[int, float]]  # fractional VM demand
    physical: dict[tuple[int, int], PhysicalGraph]  # (attack, dc) -> graph
    t_left: float
    wide_area_cost: float  # sum of f * T * L (alpha applied by evaluate_cost)

    @property
    def handled(self) -> float:
        return sum(pg.traffic_gbps for pg in self.physical.values())

    def total_vms(self) -> int:
        return sum(sum(c.values()) for c in self.n_dc.values())

    def dc_attack_volume(self, d: int, a: int, traffic: np.ndarray) -> float:
        return float((self.f[:, a, d] * traffic[:, a]).sum())


def dsp_greedy(topo: Topology, traffic: np.ndarray,
               lib: dict[AttackType, AnnotatedGraph],
               ceil_per_assignment: bool = False) -> DspResult:
    """Assign suspicious traffic volumes to datacenters, largest volume first,
    each to the cheapest datacenter that still has link and compute capacity.

    Infeasible volume is reported in t_left; this never raises for capacity.

    Default accounting charges compute fractionally and rounds VM counts up
    once at the end. `ceil_per_assignment` is a conservative sensitivity
    mode: each assignment is charged its whole-VM increment immediately, so
    final counts can never exceed slot budgets at the cost of handling less
    volume.
    """
    graphs = ordered_graphs(lib)
    traffic = validate_traffic(traffic, topo, lib)
    n_e, n_a = traffic.shape
    n_d = len(topo.datacenters)
    factors = [graph_compute_factor(g) for g in graphs]
    rates = [{n.id: g.share(n.id) / n.capacity_gbps for n in g.nodes}
             for g in graphs]

    link_rem = [dc.link_capacity_gbps for dc in topo.datacenters]
    compute_rem = [float(dc.compute_capacity) for dc in topo.datacenters]

    # Max-heap of (volume, pop, attack); ties resolve to lowest (e, a). The
    # sequence number both breaks residual ties deterministically and keys
    # the set of datacenters an item has already found unaffordable (only
    # reachable under whole-VM charging).
    heap: list[tuple[float, int, int, int]] = []
    exhausted: dict[int, set[int]] = {}
    seq = 0
    for e in range(n_e):
        for a in range(n_a):
            if traffic[e, a] > EPS:
                heap.append((-traffic[e, a], e, a, seq))
                exhausted[seq] = set()
                seq += 1
    heapq.heapify(heap)

    f = np.zeros((n_e, n_a, n_d))
    demand: dict[tuple[int, int], dict[int, float]] = {}
    charged: dict[tuple[int, int], dict[int, int]] = {}
    wide_area_cost = 0.0
    t_left = 0.0

    def vm_increment(d: int, a: int, x: float) -> int:
        """Whole VMs needed to extend (d, a)'s demand by x Gbps."""
        cur = demand.get((d, a), {})
        have = charged.get((d, a), {})
        inc = 0
        for i, r in rates[a].items():
            new = math.ceil(cur.get(i, 0.0) + x * r - _CEIL_EPS)
            inc += max(0, new - have.get(i, 0))
        return inc

    def max_affordable(d: int, a: int, upper: float) -> float:
        """Largest volume whose whole-VM increment fits the compute budget."""
        if vm_increment(d, a, upper) <= compute_rem[d] + EPS:
            return upper
        lo, hi = 0.0, upper
        for _ in range(60):
            mid = (lo + hi) / 2
            if vm_increment(d, a, mid) <= compute_rem[d] + EPS:
                lo = mid
            else:
                hi = mid
        return lo

    while heap:
        neg_t, e, a, item = heapq.heappop(heap)
        t = -neg_t
        candidates = [
            d for d in range(n_d)
            if link_rem[d] > EPS and compute_rem[d] > EPS
            and d not in exhausted[item]
        ]
        if not candidates:
            t_left += t
            continue
        d = min(candidates, key=lambda d: (topo.latency[e][d], d))

        g = graphs[a]
        t1 = min(t, link_rem[d])
        if ceil_per_assignment:
            t2 = max_affordable(d, a, t1)
        else:
            t2 = compute_rem[d] / factors[a] if factors[a] > 0 else t1
        t_assigned = min(t1, t2)
        if t_assigned <= EPS:
            # Whole-VM charging: this datacenter cannot afford the next VM
            # step for this item; retry the rest.
            exhausted[item].add(d)
            heapq.heappush(heap, (neg_t, e, a, item))
            continue

        node_demand = demand.setdefault((d, a), {n.id: 0.0 for n in g.nodes})
        if ceil_per_assignment:
            have = charged.setdefault((d, a), {n.id: 0 for n in g.nodes})
            inc = 0
            for i, r in rates[a].items():
                new = math.ceil(node_demand[i] + t_assigned * r - _CEIL_EPS)
                if new > have[i]:
                    inc += new - have[i]
                    have[i] = new
            compute_rem[d] -= inc
        else:
            compute_rem[d] -= t_assigned * factors[a]
        for i, r in rates[a].items():
            node_demand[i] += t_assigned * r
        f[e, a, d] += t_assigned / traffic[e, a]
        wide_area_cost += t_assigned * topo.latency[e][d]
        link_rem[d] -= t_assigned

        t_unassigned = t - t_assigned
        if t_unassigned > EPS:
            heapq.heappush(heap, (-t_unassigned, e, a, item))

    n_dc: dict[tuple[int, int], dict[int, int]] = {}
    physical: dict[tuple[int, int], PhysicalGraph] = {}
    for (d, a), node_demand in sorted(demand.items()):
        if ceil_per_assignment:
            counts = dict(charged[(d, a)])
        else:
            counts = {
                i: math.ceil(v - _CEIL_EPS) if v > EPS else 0
                for i, v in node_demand.items()
            }
        n_dc[(d, a)] = counts
        vol = float((f[:, a, d] * traffic[:, a]).sum())
        physical[(a, d)] = build_physical_graph(graphs[a], d, vol, counts)

    return DspResult(f=f, n_dc=n_dc, demand=demand, physical=physical,
                     t_left=float(t_left), wide_area_cost=float(wide_area_cost))


def overprovision(dsp: DspResult, gamma: float,
                  lib: dict[AttackType, AnnotatedGraph]) -> DspResult:
    """Scale the resource manager's VM counts by a cushion factor >= 1.

    Traffic fractions are untouched; only the provisioned instance counts
    (and hence the physical graphs) grow.
    """
    if gamma < 1.0:
        raise InputError("gamma must be >= 1")
    if gamma == 1.0:
        return dsp
    graphs = ordered_graphs(lib)
    n_dc = {
        key: {i: math.ceil(c * gamma - _CEIL_EPS) if c else 0
              for i, c in counts.items()}
        for key, counts in dsp.n_dc.items()
    }
    physical = {
        (a, d): build_physical_graph(graphs[a], d, pg.traffic_gbps, n_dc[(d, a)])
        for (a, d), pg in dsp.physical.items()
    }
    return DspResult(f=dsp.f, n_dc=n_dc, demand=dsp.demand, physical=physical,
                     t_left=dsp.t_left, wide_area_cost=dsp.wide_area_cost)


@dataclass
class SspResult:
    dc_id: int
    attack_id: int
    # (node id, rack id, server id) -> VM count
    n_srv: dict[tuple[int, int, int], int]
    # (node id, instance index) -> (rack id, server id)
    placements: dict[tuple[int, int], tuple[int, int]]
    intra_rack_units: float
    inter_rack_units: float

    def dc_cost(self, params: CostParams) -> float:
        return (self.intra_rack_units * params.intra_unit_cost
                + self.inter_rack_units * params.inter_unit_cost)


def _edge_units(graph: AnnotatedGraph, t_gbps: float,
                placements: dict[tuple[int, int], tuple[int, int]],
                counts: dict[int, int]) -> tuple[float, float]:
    """Intra-rack and inter-rack traffic units under uniform load balancing.

    Each annotated edge's volume splits evenly over the instance pairs of its
    endpoint nodes (tags are picked uniformly at random downstream). Pairs on
    the same server are free; same rack costs intra units, across racks inter.
    """
    intra = inter = 0.0
    for s, d, w in graph.edges:
        vol = t_gbps * w
        n_s, n_d = counts.get(s, 0), counts.get(d, 0)
        if vol <= EPS or n_s == 0 or n_d == 0:
            continue
        per_pair = vol / (n_s * n_d)
        for ks in range(n_s):
            loc_s = placements[(s, ks)]
            for kd in range(n_d):
                loc_d = placements[(d, kd)]
                if loc_s == loc_d:
                    continue
                if loc_s[0] == loc_d[0]:
                    intra += per_pair
                else:
                    inter += per_pair
    return intra, inter


def ssp_greedy(dc: Datacenter, pg: PhysicalGraph,
               lib: dict[AttackType, AnnotatedGraph],
               used_slots: dict[tuple[int, int], int] | None = None) -> SspResult:
    """Place a physical graph's VM instances onto the datacenter's servers,
    keeping each logical node's replicas (and, transitively, its
    predecessors) on one server or at least one rack where possible.

    `used_slots` lets callers share server occupancy across several graphs
    placed into the same datacenter; it is updated in place.
    """
    graph = lib[pg.attack]
    used = used_slots if used_slots is not None else {}

    def free(rack_id: int, srv_id: int, slots: int) -> int:
        return slots - used.get((rack_id, srv_id), 0)

    servers = [(rack.id, srv.id, srv.vm_slots) for rack in dc.racks for srv in rack.servers]

    placements: dict[tuple[int, int], tuple[int, int]] = {}
    n_srv: dict[tuple[int, int, int], int] = {}
    placed: set[int] = set()
    pending = {i for i, insts in pg.instances.items() if insts}
    # Nodes with no instances are trivially placed.
    placed |= {n.id for n in graph.nodes if n.id not in pending}

    def place_on(node_id: int, start_idx: int, count: int, rack_id: int, srv_id: int) -> None:
        for k in range(start_idx, start_idx + count):
            placements[(node_id, k)] = (rack_id, srv_id)
        used[(rack_id, srv_id)] = used.get((rack_id, srv_id), 0) + count
        key = (node_id, rack_id, srv_id)
        n_srv[key] = n_srv.get(key, 0) + count

    def localize(node_id: int, count: int) -> None:
        pred_servers = set()
        for p in graph.predecessors(node_id):
            for inst in pg.instances.get(p, []):
                loc = placements.get((p, inst.index))
                if loc is not None:
                    pred_servers.add(loc)
        pred_racks = {rack_id for rack_id, _srv in pred_servers}

        # Whole node on a single server if one fits it: prefer a server
        # already hosting a predecessor, then one in a predecessor's rack,
        # then the emptiest server anywhere.
        fitting = [(rack_id, srv_id, slots) for rack_id, srv_id, slots in servers
                   if free(rack_id, srv_id, slots) >= count]
        if fitting:
            rack_id, srv_id, _ = max(
                fitting,
                key=lambda s: ((s[0], s[1]) in pred_servers, s[0] in pred_racks,
                               free(s[0], s[1], s[2]), -s[0], -s[1]))
            place_on(node_id, 0, count, rack_id, srv_id)
            return
        # Else within a single rack, preferring a predecessor's rack.
        rack_free = {rack.id: sum(free(rack.id, s.id, s.vm_slots) for s in rack.servers)
                     for rack in dc.racks}
        fitting_racks = [r for r, fr in rack_free.items() if fr >= count]
        if fitting_racks:
            rack_id = max(fitting_racks,
                          key=lambda r: (r in pred_racks, rack_free[r], -r))
            _fill_rack(node_id, 0, count, rack_id)
            return
        # Else split across racks, fullest-free first.
        total_free = sum(rack_free.values())
        if total_free < count:
            raise PlacementError(
                f"datacenter {dc.id} lacks {count} slots for node "
                f"{graph.node(node_id).name} ({total_free} free)",
                node=graph.node(node_id).name,
            )
        idx = 0
        remaining = count
        for rack_id in sorted(rack_free, key=lambda r: (-rack_free[r], r)):
            take = min(remaining, rack_free[rack_id])
            if take > 0:
                _fill_rack(node_id, idx, take, rack_id)
                idx += take
                remaining -= take
            if remaining == 0:
                break

    def _fill_rack(node_id: int, start_idx: int, count: int, rack_id: int) -> None:
        rack = dc.racks[rack_id]
        idx = start_idx
        remaining = count
        srvs = sorted(rack.servers, key=lambda s: (-free(rack_id, s.id, s.vm_slots), s.id))
        for srv in srvs:
            take = min(remaining, free(rack_id, srv.id, srv.vm_slots))
            if take > 0:
                place_on(node_id, idx, take, rack_id, srv.id)
                idx += take
                remaining -= take
            if remaining == 0:
                return
        raise PlacementError(
            f"rack {rack_id} in datacenter {dc.id} ran out of slots for node "
            f"{graph.node(node_id).name}",
            node=graph.node(node_id).name,
        )

    while pending:
        ready = [i for i in pending if all(p in placed for p in graph.predecessors(i))]
        if ready:
            node_id = max(ready, key=lambda i: (graph.node(i).capacity_gbps, -i))
        else:
            node_id = max(pending, key=lambda i: (graph.node(i).capacity_gbps, -i))
        localize(node_id, pg.vm_count(node_id))
        pending.discard(node_id)
        placed.add(node_id)

    counts = {i: pg.vm_count(i) for i in pg.instances}
    intra, inter = _edge_units(graph, pg.traffic_gbps, placements, counts)
    return SspResult(dc_id=dc.id, attack_id=pg.attack.id, n_srv=n_srv,
                     placements=placements, intra_rack_units=intra,
                     inter_rack_units=inter)


def place_all(topo: Topology, dsp: DspResult,
              lib: dict[AttackType, AnnotatedGraph]) -> list[SspResult]:
    """Run SSP for every (attack, datacenter) physical graph, sharing server
    occupancy within each datacenter. Graphs place in attack-id order."""
    results = []
    used_by_dc: dict[int, dict[tuple[int, int], int]] = {}
    for (a, d) in sorted(dsp.physical):
        pg = dsp.physical[(a, d)]
        if pg.total_vms == 0:
            continue
        used = used_by_dc.setdefault(d, {})
        results.append(ssp_greedy(topo.datacenters[d], pg, lib, used))
    return results


def evaluate_cost(dsp: DspResult, ssps: list[SspResult], params: CostParams) -> float:
    """Wide-area transfer cost (weighted by alpha) plus every datacenter's
    intra/inter-rack placement cost."""
    dc_cost = sum(r.dc_cost(params) for r in ssps)
    return params.alpha * dsp.wide_area_cost + dc_cost


@dataclass
class Violation:
    constraint: int
    indices: tuple
    slack: float
    message: str

    def __str__(self) -> str:
        return f"C{self.constraint}{self.indices}: {self.message} (slack {self.slack:.6g})"


def check_feasibility(topo: Topology, traffic: np.ndarray, dsp: DspResult,
                      ssps: list[SspResult], params: CostParams,
                      lib: dict[AttackType, AnnotatedGraph],
                      tol: float = 1e-6) -> list[Violation]:
    """Check a solution against the optimization's constraint set.

    Returns an empty list iff every constraint holds. Traffic coverage is
    relaxed: fractions may sum below 1 provided t_left accounts for the
    remainder.
    """
    graphs = ordered_graphs(lib)
    traffic = validate_traffic(traffic, topo, lib)
    n_e, n_a = traffic.shape
    n_d = len(topo.datacenters)
    out: list[Violation] = []

    # (2) coverage: sum_d f <= 1 per (e, a); t_left matches the shortfall.
    for e in range(n_e):
        for a in range(n_a):
            total = float(dsp.f[e, a, :].sum())
            if total > 1.0 + tol:
                out.append(Violation(2, (e, a), total - 1.0,
                                     f"fractions for pop {e} attack {a} sum to {total:.4f}"))
    implied_left = float((traffic * (1.0 - dsp.f.sum(axis=2))).sum())
    if abs(implied_left - dsp.t_left) > max(tol, tol * traffic.sum()):
        out.append(Violation(2, ("t_left",), implied_left - dsp.t_left,
                             f"t_left {dsp.t_left:.4f} != unassigned volume {implied_left:.4f}"))

    # (4) datacenter link capacity.
    for d, dc in enumerate(topo.datacenters):
        load = float((dsp.f[:, :, d] * traffic).sum())
        if load > dc.link_capacity_gbps + tol:
            out.append(Violation(4, (d,), load - dc.link_capacity_gbps,
                                 f"dc {d} link load {load:.4f} > {dc.link_capacity_gbps}"))

    # (5) sufficient VMs per (d, a, i): placed capacity covers traffic share.
    by_da: dict[tuple[int, int], SspResult] = {(r.dc_id, r.attack_id): r for r in ssps}
    for d in range(n_d):
        for a in range(n_a):
            g = graphs[a]
            vol = dsp.dc_attack_volume(d, a, traffic)
            if vol <= tol:
                continue
            ssp = by_da.get((d, a))
            for n in g.nodes:
                need = vol * g.share(n.id)
                if need <= tol:
                    continue
                placed = 0
                if ssp is not None:
                    placed = sum(c for (i, _r, _s), c in ssp.n_srv.items() if i == n.id)
                have = placed * n.capacity_gbps
                if have + tol < need:
                    out.append(Violation(5, (d, a, n.id), need - have,
                                         f"dc {d} attack {a} node {n.name}: capacity "
                                         f"{have:.4f} < required {need:.4f}"))

    # (6) per-server slot capacity, aggregated over attacks.
    per_server: dict[tuple[int, int, int], int] = {}
    for r in ssps:
        for (i, rack, srv), c in r.n_srv.items():
            key = (r.dc_id, rack, srv)
            per_server[key] = per_server.get(key, 0) + c
    for (d, rack, srv), count in sorted(per_server.items()):
        slots = dc_server_slots(topo.datacenters[d], rack, srv)
        if count > slots:
            out.append(Violation(6, (d, rack, srv), float(count - slots),
                                 f"server ({d},{rack},{srv}) holds {count} VMs "
                                 f"for {slots} slots"))

    # (11) placement counts match the datacenter-level VM counts.
    for (d, a), counts in dsp.n_dc.items():
        ssp = by_da.get((d, a))
        for i, want in counts.items():
            got = 0
            if ssp is not None:
                got = sum(c for (ni, _r, _s), c in ssp.n_srv.items() if ni == i)
            if got != want:
                out.append(Violation(11, (d, a, i), float(got - want),
                                     f"dc {d} attack {a} node {i}: placed {got} != {want}"))

    # (14) backbone link load within beta of capacity.
    if params.beta < 1.0 and topo.backbone_links:
        caps = {(min(u, v), max(u, v)): cap for u, v, cap in topo.backbone_links}
        loads: dict[tuple[int, int], float] = {}
        for e in range(n_e):
            for d in range(n_d):
                vol = float((dsp.f[e, :, d] * traffic[e, :]).sum())
                if vol <= 0:
                    continue
                for link in topo.paths.get((e, d), []):
                    loads[link] = loads.get(link, 0.0) + vol
        for link, load in sorted(loads.items()):
            limit = params.beta * caps.get(link, float("inf"))
            if load > limit + tol:
                out.append(Violation(14, link, load - limit,
                                     f"backbone link {link} load {load:.4f} > "
                                     f"beta*cap {limit:.4f}"))

    return out


def dc_server_slots(dc: Datacenter, rack_id: int, srv_id: int) -> int:
    for rack in dc.racks:
        if rack.id == rack_id:
            for srv in rack.servers:
                if srv.id == srv_id:
                    return srv.vm_slots
    raise InputError(f"unknown server ({rack_id},{srv_id}) in dc {dc.id}")
