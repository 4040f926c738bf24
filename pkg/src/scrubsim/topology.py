"""ISP substrate model: edge PoPs, datacenters, latency costs, backbone links.

The synthetic generator builds a connected random geometric graph over the
backbone switches, attaches datacenters to a subset of PoPs (5% of backbone
nodes), and derives the PoP-to-datacenter latency matrix from shortest-path
hop counts.
"""

from __future__ import annotations

import json
import logging
import math
import random
from collections import deque
from dataclasses import dataclass, field

from .errors import InputError

log = logging.getLogger(__name__)

# Hop-count latency unit: 10 cost-units per backbone hop (10 ms links).
DEFAULT_HOP_COST = 10.0
DEFAULT_DC_LINK_GBPS = 400.0
DEFAULT_BACKBONE_GBPS = 100.0
DEFAULT_RACKS = 10
DEFAULT_SERVERS_PER_RACK = 10


@dataclass(frozen=True)
class Pop:
    id: int
    name: str


@dataclass(frozen=True)
class Server:
    id: int
    vm_slots: int


@dataclass(frozen=True)
class Rack:
    id: int
    servers: tuple[Server, ...]

    def free_slots(self) -> int:
        return sum(s.vm_slots for s in self.servers)


@dataclass(frozen=True)
class Datacenter:
    id: int
    link_capacity_gbps: float
    racks: tuple[Rack, ...]
    attach_pop: int

    @property
    def compute_capacity(self) -> int:
        """Total VM slots across all servers."""
        return sum(r.free_slots() for r in self.racks)

    def servers(self):
        for rack in self.racks:
            for srv in rack.servers:
                yield rack.id, srv


@dataclass(frozen=True)
class CostParams:
    alpha: float = 1.0
    intra_unit_cost: float = 1.0
    inter_unit_cost: float = 5.0
    beta: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise InputError("alpha must be > 0")
        if self.intra_unit_cost < 0:
            raise InputError("intra_unit_cost must be >= 0")
        if self.inter_unit_cost < self.intra_unit_cost:
            raise InputError("inter_unit_cost must be >= intra_unit_cost")
        if not (0 < self.beta <= 1.0):
            raise InputError("beta must be in (0, 1]")


@dataclass
class Topology:
    pops: list[Pop]
    datacenters: list[Datacenter]
    latency: list[list[float]]  # latency[e][d], cost-units per Gbps
    backbone_links: list[tuple[int, int, float]] = field(default_factory=list)
    # paths[(e, d)] -> ordered list of backbone link endpoints (u, v), u < v
    paths: dict[tuple[int, int], list[tuple[int, int]]] = field(default_factory=dict)

    def validate(self) -> None:
        n_e, n_d = len(self.pops), len(self.datacenters)
        if len(self.latency) != n_e or any(len(row) != n_d for row in self.latency):
            raise InputError("latency matrix dimensions do not match pops/datacenters")
        for e, row in enumerate(self.latency):
            for d, v in enumerate(row):
                if not math.isfinite(v) or v < 0:
                    raise InputError(f"latency[{e}][{d}] must be finite and >= 0")
        for (e, d) in ((e, d) for e in range(n_e) for d in range(n_d)):
            if (e, d) not in self.paths:
                raise InputError(f"missing backbone path for pop {e} -> dc {d}")


def latency_cost(topo: Topology, e: int, d: int) -> float:
    """Unit cost of steering traffic from ingress `e` to datacenter `d`."""
    if not (0 <= e < len(topo.pops)) or not (0 <= d < len(topo.datacenters)):
        raise InputError(f"latency_cost: index out of range (e={e}, d={d})")
    return topo.latency[e][d]


def _geometric_graph(n: int, rng: random.Random) -> dict[int, set[int]]:
    """Connected random geometric graph on n nodes in the unit square."""
    coords = [(rng.random(), rng.random()) for _ in range(n)]
    radius = max(0.15, 1.8 * math.sqrt(1.0 / max(n, 2)))
    adj: dict[int, set[int]] = {i: set() for i in range(n)}
    for i in range(n):
        for j in range(i + 1, n):
            if math.dist(coords[i], coords[j]) <= radius:
                adj[i].add(j)
                adj[j].add(i)
    # Stitch disconnected components together through their closest node pair.
    comp = _components(adj)
    while len(comp) > 1:
        base = comp[0]
        best = None
        for other in comp[1:]:
            for u in base:
                for v in other:
                    dist = math.dist(coords[u], coords[v])
                    if best is None or dist < best[0]:
                        best = (dist, u, v)
        _, u, v = best
        adj[u].add(v)
        adj[v].add(u)
        comp = _components(adj)
    return adj


def _components(adj: dict[int, set[int]]) -> list[list[int]]:
    seen: set[int] = set()
    out = []
    for start in adj:
        if start in seen:
            continue
        group = []
        queue = deque([start])
        seen.add(start)
        while queue:
            u = queue.popleft()
            group.append(u)
            for v in sorted(adj[u]):
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        out.append(sorted(group))
    return out


def _bfs_hops(adj: dict[int, set[int]], src: int) -> dict[int, int]:
    dist = {src: 0}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for v in sorted(adj[u]):
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def _bfs_path(adj: dict[int, set[int]], src: int, dst: int) -> list[tuple[int, int]]:
    """Shortest path as a list of normalized link endpoints; ties by node id."""
    if src == dst:
        return []
    prev: dict[int, int] = {src: src}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        if u == dst:
            break
        for v in sorted(adj[u]):
            if v not in prev:
                prev[v] = u
                queue.append(v)
    if dst not in prev:
        raise InputError(f"no backbone path between {src} and {dst}")
    path = []
    node = dst
    while node != src:
        u = prev[node]
        path.append((min(u, node), max(u, node)))
        node = u
    path.reverse()
    return path


def _build_racks(total_slots: int, n_racks: int, servers_per_rack: int) -> tuple[Rack, ...]:
    n_servers = n_racks * servers_per_rack
    base, extra = divmod(total_slots, n_servers)
    racks = []
    sid = 0
    for r in range(n_racks):
        servers = []
        for _ in range(servers_per_rack):
            slots = base + (1 if sid < extra else 0)
            servers.append(Server(id=sid, vm_slots=slots))
            sid += 1
        racks.append(Rack(id=r, servers=tuple(servers)))
    return tuple(racks)


def generate_topology(
    n_backbone: int,
    dc_slot_capacity: int,
    seed: int,
    dc_link_gbps: float = DEFAULT_DC_LINK_GBPS,
    n_racks: int = DEFAULT_RACKS,
    servers_per_rack: int = DEFAULT_SERVERS_PER_RACK,
    hop_cost: float = DEFAULT_HOP_COST,
) -> Topology:
    """Generate a synthetic ISP: every backbone switch is an edge PoP and
    datacenters sit at 5% of the backbone nodes (at least one).

    Out-of-range parameters are clamped and the clamping is logged.
    """
    if n_backbone < 2:
        log.warning("generate_topology: clamping n_backbone from %d to 2", n_backbone)
        n_backbone = 2
    if dc_slot_capacity < 0:
        log.warning("generate_topology: clamping dc_slot_capacity from %d to 0", dc_slot_capacity)
        dc_slot_capacity = 0

    rng = random.Random(seed)
    adj = _geometric_graph(n_backbone, rng)
    n_dcs = max(1, round(0.05 * n_backbone))
    dc_pops = sorted(rng.sample(range(n_backbone), n_dcs))

    pops = [Pop(id=i, name=f"pop{i}") for i in range(n_backbone)]
    dcs = [
        Datacenter(
            id=d,
            link_capacity_gbps=dc_link_gbps,
            racks=_build_racks(dc_slot_capacity, n_racks, servers_per_rack),
            attach_pop=pop,
        )
        for d, pop in enumerate(dc_pops)
    ]

    latency = [[0.0] * n_dcs for _ in range(n_backbone)]
    paths: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for d, pop in enumerate(dc_pops):
        hops = _bfs_hops(adj, pop)
        for e in range(n_backbone):
            latency[e][d] = hops[e] * hop_cost
            paths[(e, d)] = _bfs_path(adj, e, pop)

    links = [
        (u, v, DEFAULT_BACKBONE_GBPS)
        for u in sorted(adj)
        for v in sorted(adj[u])
        if u < v
    ]
    topo = Topology(pops=pops, datacenters=dcs, latency=latency,
                    backbone_links=links, paths=paths)
    topo.validate()
    return topo


def path_cost_comparison(
    topo: Topology,
    flows: list[tuple[int, int]],
    chokepoint: int,
) -> tuple[int, int]:
    """Total hop counts when every flow detours via a fixed chokepoint versus
    elastic placement, where defense capacity can sit on each flow's own
    shortest path.
    """
    if not flows:
        raise InputError("path_cost_comparison: flows must be nonempty")
    adj: dict[int, set[int]] = {p.id: set() for p in topo.pops}
    for u, v, _cap in topo.backbone_links:
        adj[u].add(v)
        adj[v].add(u)
    hops_from: dict[int, dict[int, int]] = {}

    def dist(a: int, b: int) -> int:
        if a not in adj or b not in adj:
            raise InputError(f"unknown node in flow or chokepoint: {a if a not in adj else b}")
        if a not in hops_from:
            hops_from[a] = _bfs_hops(adj, a)
        if b not in hops_from[a]:
            raise InputError(f"nodes {a} and {b} are disconnected")
        return hops_from[a][b]

    central = 0
    distributed = 0
    for src, dst in flows:
        central += dist(src, chokepoint) + dist(chokepoint, dst)
        distributed += dist(src, dst)
    return central, distributed


# ---------------------------------------------------------------------------
# Config file round-trip (JSON)

def topology_to_config(topo: Topology) -> dict:
    return {
        "pops": [p.name for p in topo.pops],
        "dcs": [
            {
                "link_capacity_gbps": dc.link_capacity_gbps,
                "racks": [[s.vm_slots for s in rack.servers] for rack in dc.racks],
                "attach_pop": dc.attach_pop,
            }
            for dc in topo.datacenters
        ],
        "latency": topo.latency,
        "links": [[u, v, cap] for u, v, cap in topo.backbone_links],
    }


def topology_from_config(cfg: dict) -> Topology:
    try:
        pops = [Pop(id=i, name=str(name)) for i, name in enumerate(cfg["pops"])]
        dcs = []
        for d, spec in enumerate(cfg["dcs"]):
            racks = []
            sid = 0
            for r, slot_list in enumerate(spec["racks"]):
                servers = tuple(Server(id=sid + k, vm_slots=int(s)) for k, s in enumerate(slot_list))
                sid += len(slot_list)
                racks.append(Rack(id=r, servers=servers))
            dcs.append(Datacenter(
                id=d,
                link_capacity_gbps=float(spec["link_capacity_gbps"]),
                racks=tuple(racks),
                attach_pop=int(spec["attach_pop"]),
            ))
        links = [(int(u), int(v), float(cap)) for u, v, cap in cfg.get("links", [])]
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed topology config: {exc}") from exc

    adj: dict[int, set[int]] = {p.id: set() for p in pops}
    for u, v, _cap in links:
        adj[u].add(v)
        adj[v].add(u)

    lat_cfg = cfg.get("latency", "derive")
    if lat_cfg == "derive":
        latency = [[0.0] * len(dcs) for _ in pops]
        for d, dc in enumerate(dcs):
            hops = _bfs_hops(adj, dc.attach_pop)
            for e in range(len(pops)):
                if e not in hops:
                    raise InputError(f"pop {e} disconnected from dc {d}")
                latency[e][d] = hops[e] * DEFAULT_HOP_COST
    else:
        latency = [[float(v) for v in row] for row in lat_cfg]

    paths = {}
    for d, dc in enumerate(dcs):
        for e in range(len(pops)):
            paths[(e, d)] = _bfs_path(adj, e, dc.attach_pop) if links else []
    if not links:
        # Degenerate configs without a backbone still need path entries.
        paths = {(e, d): [] for e in range(len(pops)) for d in range(len(dcs))}

    topo = Topology(pops=pops, datacenters=dcs, latency=latency,
                    backbone_links=links, paths=paths)
    topo.validate()
    return topo


def load_topology(path: str) -> Topology:
    with open(path) as fh:
        return topology_from_config(json.load(fh))


def save_topology(topo: Topology, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(topology_to_config(topo), fh, indent=2, sort_keys=True)
        fh.write("\n")
