"""Similarity scoring over decoupled behavior graphs and verdict assembly.

The score between two graphs is

    1 - min_ops / (|V1| + |V2| + |E1| + |E2|)

where min_ops counts the node and edge insertions/deletions needed to turn
one graph into the other.  There is no substitution operation, so minimizing
the edit count is the same as maximizing a common subgraph: with Mv matched
vertex pairs and Me matched edge pairs,

    min_ops = (|V1| - Mv) + (|V2| - Mv) + (|E1| - Me) + (|E2| - Me).

Node compatibility: system components match iff descriptors are equal,
intent actions iff actions are equal, and app components iff kinds are equal
(names are ignored, so class renaming cannot defeat matching).  An edge
matches iff both endpoints are matched and the codes are equal.  Because
system-side labels are unique within a graph, system and action nodes are
pre-matched by label; the remaining search maximizes matched edges over
injective app-component mappings.

Scores are exact rationals so that threshold comparisons and the published
worked example hold with zero tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .behavior_graph import BehaviorGraph, decouple
from .trace import Sss

EXACT_CUTOFF = 12  # exhaustive search up to this many app components
BEAM_WIDTH = 8

MODES = ("sss_only", "rbg_only", "combined")

_EMPTY: frozenset[int] = frozenset()


class NotDecoupled(Exception):
    """A graph offered for matching still contains several app clusters."""


@dataclass(frozen=True)
class SimilarityScore:
    value: Fraction
    matched_vertices: int
    matched_edges: int
    exact: bool


def exact_threshold(threshold) -> Fraction:
    """Exact rational for a threshold given as float, str, int or Fraction.

    Decimal text (or a float's shortest repr) converts exactly, so a score of
    exactly 4/5 compares equal to a user-supplied 0.8.
    """
    if isinstance(threshold, Fraction):
        return threshold
    if isinstance(threshold, float):
        return Fraction(repr(threshold))
    return Fraction(threshold)


class _Profile:
    """Per-graph precomputation shared by similarity and its cheap bound."""

    __slots__ = ("app_ids", "kind_of", "kind_counts", "sys_ids", "out", "in_", "n_nodes",
                 "n_edges", "code_counts", "degree", "canon")

    def __init__(self, g: BehaviorGraph):
        self.app_ids = sorted(nid for nid in g.nodes if nid.startswith("app:"))
        self.kind_of = {nid: g.nodes[nid].kind for nid in self.app_ids}  # type: ignore[union-attr]
        self.kind_counts: dict[str | None, int] = {}
        for nid in self.app_ids:
            k = self.kind_of[nid]
            self.kind_counts[k] = self.kind_counts.get(k, 0) + 1
        self.sys_ids = frozenset(nid for nid in g.nodes if not nid.startswith("app:"))
        out: dict[str, dict[str, set[int]]] = {}
        in_: dict[str, dict[str, set[int]]] = {}
        code_counts: dict[int, int] = {}
        degree: dict[str, int] = {nid: 0 for nid in g.nodes}
        for src, dst, code in g.edges:
            out.setdefault(src, {}).setdefault(dst, set()).add(code)
            in_.setdefault(dst, {}).setdefault(src, set()).add(code)
            code_counts[code] = code_counts.get(code, 0) + 1
            degree[src] += 1
            degree[dst] += 1
        self.out = {s: {d: frozenset(c) for d, c in m.items()} for s, m in out.items()}
        self.in_ = {d: {s: frozenset(c) for s, c in m.items()} for d, m in in_.items()}
        self.n_nodes = len(g.nodes)
        self.n_edges = len(g.edges)
        self.code_counts = code_counts
        self.degree = degree
        # Orientation key: keeps similarity symmetric even on the beam path.
        self.canon = (tuple(sorted(g.nodes)), tuple(sorted(g.edges)))

    def app_cluster_count(self) -> int:
        parent = {nid: nid for nid in self.app_ids}

        def find(x: str) -> str:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for src, targets in self.out.items():
            if src in parent:
                for dst in targets:
                    if dst in parent:
                        parent[find(src)] = find(dst)
        return len({find(nid) for nid in self.app_ids})


def _profile(g: BehaviorGraph) -> _Profile:
    if g._profile is None:
        g._profile = _Profile(g)
    return g._profile


def upper_bound_value(g1: BehaviorGraph, g2: BehaviorGraph) -> Fraction:
    """Cheap optimistic score used to prune candidates before searching."""
    p1, p2 = _profile(g1), _profile(g2)
    total = p1.n_nodes + p2.n_nodes + p1.n_edges + p2.n_edges
    if total == 0:
        return Fraction(1)
    mv = len(p1.sys_ids & p2.sys_ids)
    kinds = set(p1.kind_counts) | set(p2.kind_counts)
    mv += sum(min(p1.kind_counts.get(k, 0), p2.kind_counts.get(k, 0)) for k in kinds)
    me = sum(
        min(n, p2.code_counts.get(code, 0)) for code, n in p1.code_counts.items()
    )
    # value = 1 - min_ops/total and min_ops = total - 2*(Mv + Me)
    return Fraction(2 * (mv + me), total)


def _pair_gain(mapping: dict[str, str], x: str, y: str, p1: _Profile, p2: _Profile) -> int:
    gain = 0
    out2_y = p2.out.get(y, {})
    for u, codes in p1.out.get(x, {}).items():
        w = mapping.get(u)
        if w is not None:
            gain += len(codes & out2_y.get(w, _EMPTY))
    in2_y = p2.in_.get(y, {})
    for u, codes in p1.in_.get(x, {}).items():
        if u == x:
            continue  # self-loop already counted through out
        w = mapping.get(u)
        if w is not None:
            gain += len(codes & in2_y.get(w, _EMPTY))
    return gain


def _search_exact(order: list[str], p1: _Profile, p2: _Profile, mapping: dict[str, str]) -> tuple[int, int]:
    """Branch and bound over injective kind-compatible app mappings.

    Returns (mapped_pairs, matched_edges) maximizing pairs + edges.  ``mapping``
    arrives pre-seeded with the system-node identity matches.
    """
    n = len(order)
    candidates_by_kind: dict[str | None, list[str]] = {}
    for nid in sorted(p2.app_ids, key=lambda i: (-p2.degree[i], i)):
        candidates_by_kind.setdefault(p2.kind_of[nid], []).append(nid)

    # Suffix bounds: vertices per kind still to come, and edge units incident
    # to any not-yet-decided node (admissible: skips only remove options).
    suffix_kinds: list[dict[str | None, int]] = [dict() for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        d = dict(suffix_kinds[i + 1])
        k = p1.kind_of[order[i]]
        d[k] = d.get(k, 0) + 1
        suffix_kinds[i] = d
    # An edge unit is counted into me at the step deciding its last app
    # endpoint; units touching an unmatched system node can never match.
    pos = {nid: i for i, nid in enumerate(order)}
    suffix_units = [0] * (n + 1)
    unit_latest: list[int] = []
    for src, targets in p1.out.items():
        for dst, codes in targets.items():
            if dst not in pos and dst not in mapping:
                continue
            ends = [pos[e] for e in (src, dst) if e in pos]
            if ends:
                unit_latest.extend([max(ends)] * len(codes))
    for i in range(n - 1, -1, -1):
        suffix_units[i] = suffix_units[i + 1] + sum(1 for m in unit_latest if m == i)

    best_score = -1
    best_pair = (0, 0)
    used: set[str] = set()
    avail = {k: len(v) for k, v in candidates_by_kind.items()}
    cap_e = min(p1.n_edges, p2.n_edges)

    def rem_v(i: int) -> int:
        return sum(min(cnt, avail.get(k, 0)) for k, cnt in suffix_kinds[i].items())

    def rec(i: int, mv: int, me: int) -> None:
        nonlocal best_score, best_pair
        if i == n:
            if mv + me > best_score:
                best_score = mv + me
                best_pair = (mv, me)
            return
        if mv + me + rem_v(i) + min(suffix_units[i], cap_e - me) <= best_score:
            return
        x = order[i]
        kind = p1.kind_of[x]
        for y in candidates_by_kind.get(kind, ()):
            if y in used:
                continue
            mapping[x] = y
            used.add(y)
            avail[kind] -= 1
            rec(i + 1, mv + 1, me + _pair_gain(mapping, x, y, p1, p2))
            avail[kind] += 1
            used.discard(y)
            del mapping[x]
        rec(i + 1, mv, me)  # leave x unmatched

    rec(0, 0, 0)
    return best_pair


def _search_beam(order: list[str], p1: _Profile, p2: _Profile, seed: dict[str, str]) -> tuple[int, int]:
    """Deterministic greedy beam used beyond the exact cutoff."""
    states: list[tuple[int, int, dict[str, str], frozenset[str]]] = [(0, 0, seed, frozenset())]
    for x in order:
        kind = p1.kind_of[x]
        expansions: list[tuple[int, int, dict[str, str], frozenset[str]]] = []
        for mv, me, mapping, used in states:
            expansions.append((mv, me, mapping, used))  # skip x
            for y in sorted(p2.app_ids):
                if y in used or p2.kind_of[y] != kind:
                    continue
                new_mapping = dict(mapping)
                new_mapping[x] = y
                gain = _pair_gain(new_mapping, x, y, p1, p2)
                expansions.append((mv + 1, me + gain, new_mapping, used | {y}))
        expansions.sort(key=lambda s: (-(s[0] + s[1]), sorted(s[2].items())))
        states = expansions[:BEAM_WIDTH]
    mv, me, _, _ = max(states, key=lambda s: s[0] + s[1])
    return mv, me


def similarity(g1: BehaviorGraph, g2: BehaviorGraph) -> SimilarityScore:
    """Edit-distance similarity between two decoupled graphs.

    Exhaustive (``exact=True``) when the smaller side has at most
    ``EXACT_CUTOFF`` app components, otherwise a width-``BEAM_WIDTH``
    deterministic beam.  Symmetric in its arguments.
    """
    p1, p2 = _profile(g1), _profile(g2)
    for g, p in ((g1, p1), (g2, p2)):
        if p.app_cluster_count() > 1:
            raise NotDecoupled(f"graph with {p.app_cluster_count()} app clusters: {g!r}")

    if len(p1.app_ids) > len(p2.app_ids) or (
        len(p1.app_ids) == len(p2.app_ids) and p1.canon > p2.canon
    ):
        p1, p2 = p2, p1

    common_sys = p1.sys_ids & p2.sys_ids
    mapping = {nid: nid for nid in common_sys}

    order = sorted(p1.app_ids, key=lambda i: (-p1.degree[i], i))
    exact = len(p1.app_ids) <= EXACT_CUTOFF
    if exact:
        mv_app, me = _search_exact(order, p1, p2, mapping)
    else:
        mv_app, me = _search_beam(order, p1, p2, mapping)

    mv = len(common_sys) + mv_app
    total = p1.n_nodes + p2.n_nodes + p1.n_edges + p2.n_edges
    min_ops = (p1.n_nodes - mv) + (p2.n_nodes - mv) + (p1.n_edges - me) + (p2.n_edges - me)
    value = Fraction(total - min_ops, total) if total else Fraction(1)
    return SimilarityScore(value=value, matched_vertices=mv, matched_edges=me, exact=exact)


# ---------------------------------------------------------------------------
# store matching and verdicts
# ---------------------------------------------------------------------------


def match_sss(suspect: Sss, blacklist) -> list[str]:
    """Exact-string intersection with the blacklist, sorted for determinism."""
    hits = sorted(suspect.endpoints & blacklist.endpoints)
    hits += sorted(suspect.executables & blacklist.executables)
    return hits


def match_rbg(suspect, store, threshold=Fraction(4, 5), alpha: int = 5):
    """Best store match at or above ``threshold`` for any suspect graph.

    ``suspect`` is a list of decoupled graphs.  Candidates come from the
    store's app-component-count index within ±``alpha``.  Returns
    (family_id, SimilarityScore) or None; ties keep the smallest family id.
    """
    th = exact_threshold(threshold)
    best: tuple[str, SimilarityScore] | None = None
    for g in suspect:
        candidates = sorted(
            store.range_candidates(g.app_count, alpha),
            key=lambda r: (r.family_id, r.ordinal),
        )
        for ref in candidates:
            cand = store.graph(ref)
            ub = upper_bound_value(g, cand)
            if ub < th or (best is not None and ub <= best[1].value):
                continue
            score = similarity(g, cand)
            if score.value >= th and (best is None or score.value > best[1].value):
                best = (ref.family_id, score)
    return best


@dataclass(frozen=True)
class RuntimeBehaviorSignature:
    """The uploaded detection unit: runtime graph plus suspicious-call set."""

    app: str
    rbg: BehaviorGraph
    sss: Sss

    def __post_init__(self):
        if self.rbg.origin != "runtime":
            raise ValueError("runtime behavior signature requires a runtime-origin graph")


@dataclass(frozen=True)
class Verdict:
    decision: str  # malicious | clean
    mode: str
    family: str | None = None
    best_score: SimilarityScore | None = None
    matched_blacklist: tuple[str, ...] | None = None

    def to_json_obj(self) -> dict:
        obj: dict = {"decision": self.decision, "mode": self.mode}
        if self.family is not None:
            obj["family"] = self.family
        if self.best_score is not None:
            obj["score"] = float(self.best_score.value)
            obj["exact"] = self.best_score.exact
        if self.matched_blacklist is not None:
            obj["matched_blacklist"] = list(self.matched_blacklist)
        return obj


def decide(signature: RuntimeBehaviorSignature, store, threshold=Fraction(4, 5),
           mode: str = "combined", alpha: int = 5) -> Verdict:
    """Match a signature against the store under the given mode.

    sss_only flags on a blacklist hit, rbg_only on a graph match, combined on
    either.  The verdict carries whatever evidence was found.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    graph_hit = None
    sss_hits: list[str] = []
    if mode in ("rbg_only", "combined"):
        graph_hit = match_rbg(decouple(signature.rbg), store, threshold, alpha)
    if mode in ("sss_only", "combined"):
        sss_hits = match_sss(signature.sss, store.blacklist)
    malicious = graph_hit is not None or bool(sss_hits)
    return Verdict(
        decision="malicious" if malicious else "clean",
        mode=mode,
        family=graph_hit[0] if graph_hit else None,
        best_score=graph_hit[1] if graph_hit else None,
        matched_blacklist=tuple(sss_hits) if sss_hits else None,
    )
