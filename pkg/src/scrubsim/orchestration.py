"""Proactive tag-based forwarding: tag pools, rule synthesis, rule counting.

Every VM instance of a non-root logical node gets an identity tag; an
upstream VM's pool for an output context holds the tags of all downstream
instances, and picking uniformly from the pool load-balances without a
dedicated middlebox. Forward-to-customer contexts share one egress tag per
(node, context). All rules are installed before any traffic arrives, so rule
tables never grow with flow counts.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field

from .defense_graphs import AnnotatedGraph, AttackType, PhysicalGraph, ordered_graphs
from .errors import CapacityError, InputError, PinConflictError
from .resource_manager import DspResult, SspResult
from .topology import Topology

# A VM instance is identified by (attack id, dc id, node id, instance index).
VmKey = tuple[int, int, int, int]


@dataclass
class TagPool:
    """Per (VM instance, output context) candidate tags, plus the identity
    tag of every instance reachable through the pool."""
    pools: dict[tuple[VmKey, int], list[int]] = field(default_factory=dict)
    instance_tags: dict[VmKey, int] = field(default_factory=dict)
    egress_tags: dict[tuple[int, int, int, int], int] = field(default_factory=dict)
    # egress key: (attack id, dc id, node id, context index)
    next_tag: int = 1

    def pool(self, vm: VmKey, context: int) -> list[int]:
        try:
            return self.pools[(vm, context)]
        except KeyError:
            raise CapacityError(f"no tag pool for vm {vm} context {context}") from None

    @property
    def max_tag(self) -> int:
        return max([t for p in self.pools.values() for t in p], default=0)


def assign_tags(pg: PhysicalGraph, lib: dict[AttackType, AnnotatedGraph],
                seed: int | None = None, pools: TagPool | None = None,
                max_bits: int | None = None) -> TagPool:
    """Allocate tags for one placed physical graph.

    Tag values are consecutive integers from the pool's counter (canonical
    order: node id, then instance index); a seed shuffles the numbering
    deterministically. Passing an existing TagPool keeps values unique
    across graphs and datacenters.
    """
    graph = lib[pg.attack]
    pools = pools if pools is not None else TagPool()
    a, d = pg.attack.id, pg.dc_id

    roots = set(graph.roots)
    slots_needed = []
    for node in sorted(pg.instances):
        if node in roots:
            continue
        for inst in pg.instances[node]:
            slots_needed.append(("vm", (a, d, node, inst.index)))
    for node in sorted(pg.instances):
        mod = graph.node(node)
        if mod.delivers:
            egress_context = len(graph.successors(node))
            slots_needed.append(("egress", (a, d, node, egress_context)))

    values = list(range(pools.next_tag, pools.next_tag + len(slots_needed)))
    if seed is not None:
        random.Random(seed).shuffle(values)
    pools.next_tag += len(slots_needed)
    if max_bits is not None and values and max(values) >= (1 << max_bits):
        raise CapacityError(
            f"tag space exhausted: need tag {max(values)} with only {max_bits} bits")

    for (kind, key), value in zip(slots_needed, values):
        if kind == "vm":
            pools.instance_tags[key] = value
        else:
            pools.egress_tags[key] = value

    for node in sorted(pg.instances):
        mod = graph.node(node)
        succs = graph.successors(node)
        for inst in pg.instances[node]:
            vm: VmKey = (a, d, node, inst.index)
            for c, succ in enumerate(succs):
                pools.pools[(vm, c)] = [
                    pools.instance_tags[(a, d, succ, down.index)]
                    for down in pg.instances.get(succ, [])
                ]
            if mod.delivers:
                c = len(succs)
                pools.pools[(vm, c)] = [pools.egress_tags[(a, d, node, c)]]
    return pools


def build_tag_pools(physical: dict[tuple[int, int], PhysicalGraph],
                    lib: dict[AttackType, AnnotatedGraph],
                    seed: int | None = None,
                    max_bits: int | None = None) -> TagPool:
    """One deployment-wide pool covering every (attack, datacenter) graph."""
    pools = TagPool()
    for key in sorted(physical):
        assign_tags(physical[key], lib, seed=seed, pools=pools, max_bits=max_bits)
    return pools


def tag_space_bound(graphs: list[AnnotatedGraph], l_max: int,
                    k_max: int | None = None) -> tuple[int, int]:
    """Upper bound on distinct tag values and the bits to encode them.

    Counts the tag-emitting vertices (those with downstream edges) of every
    graph; each needs at most k_max contexts times l_max replica tags.
    """
    if l_max < 1:
        raise InputError("l_max must be >= 1")
    emitting = 0
    max_contexts = 1
    for g in graphs:
        count = 0
        for n in g.nodes:
            if g.successors(n.id):
                count += 1
                max_contexts = max(max_contexts, n.contexts)
        emitting += max(count, 1)  # a single-module graph still tags egress
    k = k_max if k_max is not None else max_contexts
    max_tags = k * l_max * emitting
    bits = math.ceil(math.log2(max_tags)) if max_tags > 1 else 0
    return max_tags, bits


@dataclass
class ForwardingRule:
    switch: str
    match: tuple[str, object]  # ("flow"|"tunnel"|"tag", value)
    action: tuple[str, object]  # ("split", [(target, weight)]) | ("vm", key) | ("customer", None)

    def to_json(self) -> dict:
        return {"switch": self.switch, "match": list(self.match),
                "action": [self.action[0], _jsonable(self.action[1])]}


def _jsonable(x):
    if isinstance(x, tuple):
        return list(x)
    if isinstance(x, list):
        return [_jsonable(v) for v in x]
    return x


@dataclass
class ForwardingPlan:
    wide_area: dict[tuple[int, int], list[tuple[int, float]]]  # (e, a) -> [(d, weight)]
    dc_tables: dict[str, list[ForwardingRule]]
    tag_bits: int
    bidi_pins: dict[int, tuple[int, VmKey]] = field(default_factory=dict)

    def rules_by_switch(self) -> dict[str, int]:
        return {sw: len(rules) for sw, rules in self.dc_tables.items()}

    def max_switch_rules(self) -> int:
        return max(self.rules_by_switch().values(), default=0)

    def to_json(self) -> dict:
        return {
            "wide_area": {
                f"e{e}-a{a}": [[d, w] for d, w in sorted(splits)]
                for (e, a), splits in sorted(self.wide_area.items())
            },
            "dc_tables": {
                sw: [r.to_json() for r in rules]
                for sw, rules in sorted(self.dc_tables.items())
            },
            "tag_bits": self.tag_bits,
            "bidi_pins": {str(t): [d, list(vm)] for t, (d, vm) in sorted(self.bidi_pins.items())},
        }

    def dump(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def synthesize_rules(dsp: DspResult, ssps: list[SspResult], pools: TagPool,
                     topo: Topology,
                     lib: dict[AttackType, AnnotatedGraph]) -> ForwardingPlan:
    """Compile the resource assignment into proactive forwarding state:
    ingress flow-spec rules splitting over tunnels, per-datacenter tag rules
    steering between VM instances, and egress rules toward the customer.

    Construction is a pure function of the assignment; no per-flow input is
    ever consulted.
    """
    graphs = ordered_graphs(lib)
    placements = {(r.attack_id, r.dc_id): r.placements for r in ssps}

    wide_area: dict[tuple[int, int], list[tuple[int, float]]] = {}
    n_e, n_a, n_d = dsp.f.shape
    for e in range(n_e):
        for a in range(n_a):
            splits = [(d, float(dsp.f[e, a, d])) for d in range(n_d)
                      if dsp.f[e, a, d] > 0]
            if splits:
                wide_area[(e, a)] = splits

    tables: dict[str, list[ForwardingRule]] = {}

    def add(rule: ForwardingRule) -> None:
        table = tables.setdefault(rule.switch, [])
        if any(r.match == rule.match for r in table):
            raise InputError(f"duplicate rule match {rule.match} on {rule.switch}")
        table.append(rule)

    for (e, a), splits in sorted(wide_area.items()):
        add(ForwardingRule(
            switch=f"pop{e}",
            match=("flow", f"e{e}-a{a}"),
            action=("split", [(f"tunnel-e{e}-d{d}", w) for d, w in splits]),
        ))

    for (a, d), pg in sorted(dsp.physical.items()):
        if pg.total_vms == 0:
            continue
        graph = graphs[a]
        placed = placements.get((a, d))
        if placed is None:
            raise InputError(f"physical graph ({a},{d}) has no server placement")
        sw = f"dc{d}"
        ingress_sw = f"dc{d}-ingress"
        roots = graph.roots
        root_targets = []
        for root in roots:
            insts = pg.instances.get(root, [])
            if not insts:
                continue
            frac = graph.external_fraction(root)
            for inst in insts:
                key = (a, d, root, inst.index)
                if (root, inst.index) not in placed:
                    raise InputError(f"unplaced VM {key}")
                root_targets.append((key, frac / len(insts)))
        for e in range(n_e):
            if dsp.f[e, a, d] > 0:
                add(ForwardingRule(
                    switch=ingress_sw,
                    match=("tunnel", f"e{e}-a{a}"),
                    action=("split", list(root_targets)),
                ))
        for node in sorted(pg.instances):
            for inst in pg.instances[node]:
                key = (a, d, node, inst.index)
                if (node, inst.index) not in placed:
                    raise InputError(f"unplaced VM {key}")
                tag = pools.instance_tags.get(key)
                if tag is not None:
                    add(ForwardingRule(switch=sw, match=("tag", tag),
                                       action=("vm", key)))
        for (ea, ed, node, ctx), tag in sorted(pools.egress_tags.items()):
            if (ea, ed) == (a, d):
                add(ForwardingRule(switch=sw, match=("tag", tag),
                                   action=("customer", None)))

    max_tag = pools.max_tag
    tag_bits = math.ceil(math.log2(max_tag + 1)) if max_tag > 0 else 0
    return ForwardingPlan(wide_area=wide_area, dc_tables=tables, tag_bits=tag_bits)


def rule_count_comparison(plan: ForwardingPlan, n_flows: int) -> tuple[int, int]:
    """Largest per-switch table in the plan versus one rule per flow."""
    if n_flows < 0:
        raise InputError("n_flows must be >= 0")
    return plan.max_switch_rules(), n_flows


def load_balance_pick(pool: TagPool, vm: VmKey, context: int,
                      rng: random.Random) -> int:
    """Uniform random tag choice; this is the in-VM load balancer."""
    candidates = pool.pool(vm, context)
    if not candidates:
        raise CapacityError(f"empty tag pool for vm {vm} context {context}")
    return candidates[rng.randrange(len(candidates))]


def pin_bidirectional(plan: ForwardingPlan, outbound_tag: int, dc: int,
                      vm: VmKey) -> ForwardingPlan:
    """Steer reverse-direction traffic carrying `outbound_tag` to the VM that
    handles the forward direction. Idempotent per tag; remapping raises."""
    existing = plan.bidi_pins.get(outbound_tag)
    if existing is not None:
        if existing == (dc, vm):
            return plan
        raise PinConflictError(
            f"tag {outbound_tag} already pinned to {existing}, not ({dc}, {vm})")
    plan.bidi_pins[outbound_tag] = (dc, vm)
    return plan


def pin_bidirectional_for_graph(plan: ForwardingPlan, pg: PhysicalGraph,
                                pools: TagPool,
                                lib: dict[AttackType, AnnotatedGraph]) -> int:
    """Pin every outbound tag emitted by the graph's analysis VMs, mapping
    each tag to the downstream VM that will process the return traffic.
    No-op for unidirectional defense graphs. Returns the number of pins."""
    graph = lib[pg.attack]
    if not graph.bidirectional:
        return 0
    count = 0
    a, d = pg.attack.id, pg.dc_id
    for node in sorted(pg.instances):
        if graph.node(node).kind != "analysis":
            continue
        for inst in pg.instances[node]:
            vm: VmKey = (a, d, node, inst.index)
            for c in range(len(graph.successors(node))):
                for tag in pools.pools.get((vm, c), []):
                    target = _vm_of_tag(pools, tag)
                    if target is not None:
                        before = tag in plan.bidi_pins
                        pin_bidirectional(plan, tag, d, target)
                        if not before:
                            count += 1
    return count


def _vm_of_tag(pools: TagPool, tag: int) -> VmKey | None:
    for vm, t in pools.instance_tags.items():
        if t == tag:
            return vm
    return None


def plan_realizes_edges(plan: ForwardingPlan, pg: PhysicalGraph, pools: TagPool,
                        lib: dict[AttackType, AnnotatedGraph]) -> list[str]:
    """Reachability check: every positive-weight annotated edge with
    instances on both ends must be realizable through pool tags and switch
    rules. Returns a list of human-readable gaps (empty when complete)."""
    graph = lib[pg.attack]
    a, d = pg.attack.id, pg.dc_id
    table = {r.match: r for r in plan.dc_tables.get(f"dc{d}", [])}
    gaps = []
    for s, dst, w in graph.edges:
        if w <= 0 or not pg.instances.get(s) or not pg.instances.get(dst):
            continue
        c = graph.successors(s).index(dst)
        for inst in pg.instances[s]:
            vm: VmKey = (a, d, s, inst.index)
            tags = pools.pools.get((vm, c), [])
            if not tags:
                gaps.append(f"vm {vm} has no pool for context {c}")
                continue
            reachable = set()
            for tag in tags:
                rule = table.get(("tag", tag))
                if rule is None:
                    gaps.append(f"tag {tag} from vm {vm} has no switch rule")
                elif rule.action[0] == "vm":
                    reachable.add(rule.action[1][3])
            want = {down.index for down in pg.instances[dst]}
            if reachable != want:
                gaps.append(
                    f"edge {s}->{dst}: vm {vm} reaches instances {sorted(reachable)} "
                    f"of {sorted(want)}")
    return gaps
