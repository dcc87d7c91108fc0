"""Independent oracles and random-input generators used across the suite.

Everything here deliberately avoids the library's solver code paths: the
reaching-definitions oracle re-derives GEN/KILL and iterates chaotically, and
the similarity oracle enumerates every injective compatible mapping outright.
"""

from __future__ import annotations

import random
from fractions import Fraction

from monet.app_model import (
    Instruction,
    MethodIR,
    assign_class,
    assign_string,
    assign_this,
    make_method,
    new_intent_action,
    new_intent_explicit,
    nop,
    opaque,
)
from monet.behavior_graph import AppComponent, BehaviorGraph, IntentAction, SystemComponent
from monet.dataflow import ENTRY, Cfg, DefId

KINDS = ("activity", "service", "receiver", "provider")


# ---------------------------------------------------------------------------
# chaotic-iteration reaching definitions
# ---------------------------------------------------------------------------


def chaotic_reaching_definitions(cfg: Cfg, rng: random.Random):
    """Iterate blocks in random order until a full sweep changes nothing."""
    defs_of: dict[str, set] = {}
    for bid, instrs in cfg.blocks.items():
        for idx, instr in enumerate(instrs):
            for var in instr.defs:
                defs_of.setdefault(var, set()).add(DefId(bid, idx, var))

    gen: dict[str, frozenset] = {}
    kill: dict[str, frozenset] = {}
    for bid in (*cfg.blocks, ENTRY, "EXIT"):
        last: dict[str, DefId] = {}
        killed: set = set()
        for idx, instr in enumerate(cfg.blocks.get(bid, ())):
            for var in instr.defs:
                killed |= defs_of[var]
                last[var] = DefId(bid, idx, var)
        gen[bid] = frozenset(last.values())
        kill[bid] = frozenset(killed - set(last.values()))

    blocks = [b for b in (*cfg.blocks, "EXIT")]
    in_: dict[str, frozenset] = {b: frozenset() for b in (*blocks, ENTRY)}
    out: dict[str, frozenset] = {b: frozenset() for b in (*blocks, ENTRY)}
    while True:
        changed = False
        order = list(blocks)
        rng.shuffle(order)
        for bid in order:
            new_in = frozenset().union(*(out[p] for p in cfg.pred[bid])) if cfg.pred[bid] else frozenset()
            new_out = gen[bid] | (new_in - kill[bid])
            if new_in != in_[bid] or new_out != out[bid]:
                changed = True
            in_[bid], out[bid] = new_in, new_out
        if not changed:
            return in_, out


def random_method(rng: random.Random, max_blocks: int = 20, n_vars: int = 6) -> MethodIR:
    n = rng.randint(1, max_blocks)
    bids = [f"b{i}" for i in range(n)]
    blocks = []
    for bid in bids:
        instrs = []
        for _ in range(rng.randint(0, 4)):
            v = f"v{rng.randrange(n_vars)}"
            roll = rng.random()
            if roll < 0.3:
                instrs.append(assign_string(v, f"s{rng.randrange(4)}"))
            elif roll < 0.55:
                instrs.append(assign_this(v))
            elif roll < 0.8:
                instrs.append(opaque(f"o{rng.randrange(3)}", v))
            else:
                instrs.append(nop())
        blocks.append((bid, instrs))
    edges = []
    for bid in bids:
        for _ in range(rng.randint(0, 2)):
            edges.append((bid, rng.choice(bids)))
    return make_method("m", blocks, edges)


def random_chain_method(rng: random.Random) -> MethodIR:
    """Methods with intent chains, some hidden behind opaque definitions."""
    instrs: list[Instruction] = []
    for c in range(rng.randint(1, 3)):
        v1, v2, iv = f"a{c}", f"b{c}", f"i{c}"
        if rng.random() < 0.5:
            head = [assign_this(v1), assign_class(v2, f"com.t.K{c}")]
            if rng.random() < 0.3:
                head[1] = opaque("enc", v2)
            instrs += [*head, new_intent_explicit(iv, v1, v2),
                       Instruction(rng.choice(("start_activity", "start_service")), uses=(iv,))]
        else:
            sv = f"s{c}"
            first = assign_string(sv, f"com.t.action.A{c}") if rng.random() < 0.7 else opaque("enc", sv)
            instrs += [first, new_intent_action(iv, sv),
                       Instruction("start_activity", uses=(iv,))]
    if rng.random() < 0.5 and len(instrs) > 3:
        cut = rng.randint(1, len(instrs) - 1)
        return make_method("m", [("b0", instrs[:cut]), ("b1", instrs[cut:])], [("b0", "b1")])
    return make_method("m", [("b0", instrs)], [])


# ---------------------------------------------------------------------------
# brute-force similarity
# ---------------------------------------------------------------------------


def brute_force_best(g1: BehaviorGraph, g2: BehaviorGraph) -> tuple[int, int, Fraction]:
    """Max (Mv, Me) over all injective compatible mappings, by enumeration."""
    apps1 = sorted(n for n in g1.nodes if n.startswith("app:"))
    apps2 = sorted(n for n in g2.nodes if n.startswith("app:"))
    kind1 = {n: g1.nodes[n].kind for n in apps1}
    kind2 = {n: g2.nodes[n].kind for n in apps2}
    sys_common = {n for n in g1.nodes if not n.startswith("app:")} & {
        n for n in g2.nodes if not n.startswith("app:")
    }
    edges2 = set(g2.edges)

    best = (-1, 0, 0)  # (mv + me, mv, me)

    def leaf(mapping: dict[str, str]) -> None:
        nonlocal best
        me = 0
        for (s, d, c) in g1.edges:
            ms, md = mapping.get(s), mapping.get(d)
            if ms is not None and md is not None and (ms, md, c) in edges2:
                me += 1
        mv = len(mapping)
        if mv + me > best[0]:
            best = (mv + me, mv, me)

    def rec(i: int, mapping: dict[str, str], used: set[str]) -> None:
        if i == len(apps1):
            leaf(mapping)
            return
        x = apps1[i]
        rec(i + 1, mapping, used)
        for y in apps2:
            if y not in used and kind1[x] == kind2[y]:
                mapping[x] = y
                used.add(y)
                rec(i + 1, mapping, used)
                used.discard(y)
                del mapping[x]

    rec(0, {n: n for n in sys_common}, set())
    _, mv, me = best
    total = len(g1.nodes) + len(g2.nodes) + len(g1.edges) + len(g2.edges)
    value = Fraction(2 * (mv + me), total) if total else Fraction(1)
    return mv, me, value


# ---------------------------------------------------------------------------
# random graphs
# ---------------------------------------------------------------------------

_SYS_POOL = ["PackageManager", "PhoneSubInfo", "ISms", "WindowManager", "JobScheduler"]
_ACT_POOL = ["com.t.action.ONE", "com.t.action.TWO", "com.t.action.THREE"]


def random_cluster_graph(rng: random.Random, max_app: int = 6, max_total: int = 8) -> BehaviorGraph:
    """A single-app-cluster runtime graph within the given size bounds."""
    n_app = rng.randint(1, min(max_app, max_total))
    apps = [
        AppComponent(f"com.t.C{i}", rng.choice((*KINDS, None))) for i in range(n_app)
    ]
    nodes: list = list(apps)
    edges: list[tuple] = []
    for i in range(1, n_app):
        src = apps[rng.randrange(i)]
        edges.append((src, apps[i], rng.randint(1, 5)))
    budget = rng.randint(0, max_total - n_app)
    side = rng.sample(_SYS_POOL, min(budget, len(_SYS_POOL)))
    for desc in side:
        node = SystemComponent(desc)
        nodes.append(node)
        edges.append((rng.choice(apps), node, rng.randint(1, 5)))
    if budget > len(side) and rng.random() < 0.7:
        node = IntentAction(rng.choice(_ACT_POOL))
        nodes.append(node)
        edges.append((rng.choice(apps), node, 3))
    for _ in range(rng.randint(0, 3)):
        src = rng.choice(apps)
        dst = rng.choice(nodes)
        edges.append((src, dst, rng.randint(1, 5)))
    return BehaviorGraph.of("runtime", nodes, edges)


def perturb_graph(rng: random.Random, g: BehaviorGraph) -> BehaviorGraph:
    """A variant of g: renames, kind flips, edge retargets; stays one cluster."""
    for _ in range(30):
        nodes = {nid: n for nid, n in g.nodes.items()}
        edges = dict(g.edges)
        for _ in range(rng.randint(1, 3)):
            kind_roll = rng.random()
            app_ids = [n for n in nodes if n.startswith("app:")]
            if kind_roll < 0.4 and app_ids:  # rename an app component
                nid = rng.choice(app_ids)
                node = nodes.pop(nid)
                renamed = AppComponent(node.name + "X", node.kind)
                nodes["app:" + renamed.name] = renamed
                edges = {
                    (
                        "app:" + renamed.name if s == nid else s,
                        "app:" + renamed.name if d == nid else d,
                        c,
                    ): v
                    for (s, d, c), v in edges.items()
                }
            elif kind_roll < 0.6 and app_ids:  # flip a kind
                nid = rng.choice(app_ids)
                node = nodes[nid]
                nodes[nid] = AppComponent(node.name, rng.choice((*KINDS, None)))
            elif kind_roll < 0.8 and edges:  # change a code
                key = rng.choice(sorted(edges))
                content = edges.pop(key)
                edges[(key[0], key[1], rng.randint(1, 6))] = content
            elif edges:  # drop an edge
                key = rng.choice(sorted(edges))
                edges.pop(key)
        used = {e for key in edges for e in key[:2]}
        nodes = {
            nid: n
            for nid, n in nodes.items()
            if nid.startswith("app:") or nid in used
        }
        try:
            candidate = BehaviorGraph("runtime", nodes, edges)
        except Exception:
            continue
        if _app_clusters(candidate) <= 1:
            return candidate
    return g


def _app_clusters(g: BehaviorGraph) -> int:
    apps = [n for n in g.nodes if n.startswith("app:")]
    parent = {n: n for n in apps}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for s, d, _ in g.edges:
        if s in parent and d in parent:
            parent[find(s)] = find(d)
    return len({find(n) for n in apps})


def random_multi_cluster_rbg(rng: random.Random) -> BehaviorGraph:
    """A repackaged-style graph: several app clusters sharing system nodes."""
    k = rng.randint(1, 4)
    nodes: list = []
    edges: list[tuple] = []
    shared = [SystemComponent(d) for d in rng.sample(_SYS_POOL, rng.randint(0, 4))]
    actions = [IntentAction(a) for a in rng.sample(_ACT_POOL, rng.randint(0, 2))]
    for c in range(k):
        n_app = rng.randint(1, 5)
        apps = [
            AppComponent(f"com.cl{c}.C{i}", rng.choice(KINDS)) for i in range(n_app)
        ]
        nodes.extend(apps)
        for i in range(1, n_app):
            edges.append((apps[rng.randrange(i)], apps[i], rng.randint(1, 5)))
        for node in (*shared, *actions):
            if rng.random() < 0.5:
                edges.append((rng.choice(apps), node, rng.randint(1, 5)))
    used = {dst for _, dst, _ in edges}
    side_nodes = [n for n in (*shared, *actions) if n in used]
    return BehaviorGraph.of("runtime", nodes + side_nodes, edges)
