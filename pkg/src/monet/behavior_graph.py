"""Behavior graphs: static construction, runtime completion and decoupling.

A behavior graph is a directed labeled graph over three node families:

* app components (name + declared kind; kind is None for components only
  discovered at runtime through dynamic loading),
* system components (identified by descriptor string),
* intent actions (implicit intents whose handler is unknown; treated as
  system-side nodes).

Edges carry an integer transaction code and an optional display-only content
string, and are deduplicated by (src, dst, code) keeping the first content
seen.  Static edges use the canonical codes below; runtime records carry
their own codes verbatim.

In one graph there is at most one node per identity (app name / descriptor /
action), so node ids double as labels.  Graphs are immutable once built.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .app_model import AppPackage
from .dataflow import IntentCall

# Canonical transaction codes for statically resolved intent calls.  3 is the
# conventional start-activity code observed in binder traffic; 5 and 14 are
# fixed artifact conventions for the other two call kinds.
CODE_START_ACTIVITY = 3
CODE_START_SERVICE = 5
CODE_SEND_BROADCAST = 14

STATIC_CODES = {
    "start_activity": CODE_START_ACTIVITY,
    "start_service": CODE_START_SERVICE,
    "send_broadcast": CODE_SEND_BROADCAST,
}


class GraphError(Exception):
    pass


class CorruptGraph(GraphError):
    """A serialized graph violates the schema or a structural invariant."""


class UnknownCaller(GraphError):
    """A binder record's caller is neither declared nor marked dynamic."""

    def __init__(self, record):
        self.record = record
        super().__init__(f"binder record {record.seq}: unknown caller {record.caller!r}")


@dataclass(frozen=True)
class AppComponent:
    name: str
    kind: str | None  # None: discovered at runtime via dynamic loading


@dataclass(frozen=True)
class SystemComponent:
    descriptor: str


@dataclass(frozen=True)
class IntentAction:
    action: str


GraphNode = AppComponent | SystemComponent | IntentAction


def node_id(node: GraphNode) -> str:
    if isinstance(node, AppComponent):
        return "app:" + node.name
    if isinstance(node, SystemComponent):
        return "sys:" + node.descriptor
    return "act:" + node.action


def _node_type(node: GraphNode) -> str:
    if isinstance(node, AppComponent):
        return "app"
    if isinstance(node, SystemComponent):
        return "system"
    return "action"


def _node_label(node: GraphNode) -> str:
    if isinstance(node, AppComponent):
        return node.name
    if isinstance(node, SystemComponent):
        return node.descriptor
    return node.action


EdgeKey = tuple[str, str, int]


class BehaviorGraph:
    """Immutable directed graph; ``origin`` is "static" or "runtime"."""

    __slots__ = ("origin", "nodes", "edges", "_profile")

    def __init__(self, origin: str, nodes: dict[str, GraphNode], edges: dict[EdgeKey, str | None]):
        if origin not in ("static", "runtime"):
            raise CorruptGraph(f"bad origin {origin!r}")
        self.origin = origin
        self.nodes = nodes
        self.edges = edges
        self._profile = None
        self._validate()

    @classmethod
    def of(cls, origin: str, nodes, edges) -> "BehaviorGraph":
        """Build from node values and (src_node, dst_node, code[, content]) tuples."""
        node_map: dict[str, GraphNode] = {}
        for n in nodes:
            nid = node_id(n)
            if nid in node_map and node_map[nid] != n:
                raise CorruptGraph(f"conflicting nodes for {nid}")
            node_map[nid] = n
        edge_map: dict[EdgeKey, str | None] = {}
        for e in edges:
            src, dst, code = e[0], e[1], e[2]
            content = e[3] if len(e) > 3 else None
            key = (node_id(src), node_id(dst), int(code))
            edge_map.setdefault(key, content)
        return cls(origin, node_map, edge_map)

    def _validate(self) -> None:
        for nid, node in self.nodes.items():
            if node_id(node) != nid:
                raise CorruptGraph(f"node id mismatch: {nid}")
        for src, dst, code in self.edges:
            if src not in self.nodes or dst not in self.nodes:
                raise CorruptGraph(f"edge endpoint missing: {src}->{dst}")
            if not isinstance(code, int):
                raise CorruptGraph(f"non-integer edge code on {src}->{dst}")
            # Traces are app-scoped: every call originates from an app component.
            if not src.startswith("app:"):
                raise CorruptGraph(f"edge source is not an app component: {src}")
        if self.origin == "static":
            # Static system-side nodes only arise as intent-call targets, so
            # none may float free of the edge set.
            targeted = {dst for _, dst, _ in self.edges}
            for nid in self.nodes:
                if not nid.startswith("app:") and nid not in targeted:
                    raise CorruptGraph(f"static graph has unreferenced system node {nid}")

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, BehaviorGraph)
            and self.origin == other.origin
            and self.nodes == other.nodes
            and self.edges == other.edges
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"BehaviorGraph({self.origin}, {len(self.nodes)} nodes, {len(self.edges)} edges)"

    def app_components(self) -> list[AppComponent]:
        return [n for n in self.nodes.values() if isinstance(n, AppComponent)]

    @property
    def app_count(self) -> int:
        return sum(1 for nid in self.nodes if nid.startswith("app:"))

    def node(self, nid: str) -> GraphNode:
        return self.nodes[nid]


def graph_to_json_obj(g: BehaviorGraph) -> dict:
    nodes = []
    for node in sorted(g.nodes.values(), key=lambda n: (_node_type(n), _node_label(n))):
        obj = {"id": node_id(node), "type": _node_type(node), "label": _node_label(node)}
        if isinstance(node, AppComponent) and node.kind is not None:
            obj["kind"] = node.kind
        nodes.append(obj)
    edges = []
    for (src, dst, code) in sorted(g.edges):
        obj = {"src": src, "dst": dst, "code": code}
        content = g.edges[(src, dst, code)]
        if content is not None:
            obj["content"] = content
        edges.append(obj)
    return {"origin": g.origin, "nodes": nodes, "edges": edges}


def graph_to_json(g: BehaviorGraph) -> str:
    """Canonical serialization: byte-stable for equal graphs."""
    return json.dumps(graph_to_json_obj(g), sort_keys=True, indent=2) + "\n"


def graph_from_json_obj(obj) -> BehaviorGraph:
    if not isinstance(obj, dict):
        raise CorruptGraph("graph JSON must be an object")
    try:
        origin = obj["origin"]
        nodes: list[GraphNode] = []
        for n in obj["nodes"]:
            ntype, label = n["type"], n["label"]
            if ntype == "app":
                node: GraphNode = AppComponent(label, n.get("kind"))
            elif ntype == "system":
                node = SystemComponent(label)
            elif ntype == "action":
                node = IntentAction(label)
            else:
                raise CorruptGraph(f"unknown node type {ntype!r}")
            if n["id"] != node_id(node):
                raise CorruptGraph(f"node id {n['id']!r} does not match its label")
            nodes.append(node)
        edge_items = [
            (e["src"], e["dst"], e["code"], e.get("content")) for e in obj["edges"]
        ]
    except (KeyError, TypeError) as exc:
        raise CorruptGraph(f"malformed graph JSON: {exc}") from exc
    node_map = {node_id(n): n for n in nodes}
    if len(node_map) != len(nodes):
        raise CorruptGraph("duplicate node ids")
    edges: dict[EdgeKey, str | None] = {}
    for src, dst, code, content in edge_items:
        if not isinstance(code, int) or isinstance(code, bool):
            raise CorruptGraph(f"edge code must be an integer: {code!r}")
        key = (src, dst, code)
        if key in edges:
            raise CorruptGraph(f"duplicate edge {key}")
        edges[key] = content
    return BehaviorGraph(origin, node_map, edges)


def graph_from_json(text: str) -> BehaviorGraph:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptGraph(f"invalid JSON: {exc}") from exc
    return graph_from_json_obj(obj)


# ---------------------------------------------------------------------------
# static behavior graph
# ---------------------------------------------------------------------------


def build_sbg(pkg: AppPackage, calls: list[IntentCall]) -> BehaviorGraph:
    """One app node per declared component, one edge per resolved intent call.

    Explicit targets map to the declared component when present, otherwise to
    a system node named by the class.  Implicit targets map to intent-action
    nodes.  Unresolved calls contribute nothing.  Content providers are not
    intent-addressable, so calls from or to a declared provider are skipped.
    """
    kinds = pkg.kinds_by_name()
    nodes: dict[str, GraphNode] = {}
    for comp in pkg.components:
        node = AppComponent(comp.name, comp.kind)
        nodes[node_id(node)] = node
    edges: dict[EdgeKey, str | None] = {}
    for call in calls:
        if call.target_kind == "unresolved":
            continue
        if kinds.get(call.caller_component) == "provider":
            continue
        src = AppComponent(call.caller_component, kinds[call.caller_component])
        if call.target_kind == "explicit":
            assert call.target is not None
            if call.target in kinds:
                if kinds[call.target] == "provider":
                    continue
                dst: GraphNode = AppComponent(call.target, kinds[call.target])
            else:
                dst = SystemComponent(call.target)
        else:
            assert call.target is not None
            dst = IntentAction(call.target)
        nodes.setdefault(node_id(dst), dst)
        edges.setdefault((node_id(src), node_id(dst), STATIC_CODES[call.call_kind]), None)
    return BehaviorGraph("static", nodes, edges)


# ---------------------------------------------------------------------------
# runtime completion
# ---------------------------------------------------------------------------


def complete_rbg(sbg: BehaviorGraph, trace, pkg: AppPackage) -> BehaviorGraph:
    """Complete a static graph with observed binder records.

    Returns a new runtime-origin graph; ``sbg`` is not mutated.  Raises
    :class:`UnknownCaller` for records whose caller is neither a declared
    component nor flagged dynamic anywhere in the trace.
    """
    if sbg.origin != "static":
        raise ValueError("complete_rbg expects a static graph")
    kinds = pkg.kinds_by_name()
    dynamic = {r.caller for r in trace.binder if r.dynamic_caller}
    nodes = dict(sbg.nodes)
    edges = dict(sbg.edges)
    for record in trace.binder:
        caller_id = "app:" + record.caller
        if caller_id not in nodes:
            if record.caller in kinds:
                nodes[caller_id] = AppComponent(record.caller, kinds[record.caller])
            elif record.caller in dynamic:
                nodes[caller_id] = AppComponent(record.caller, None)
            else:
                raise UnknownCaller(record)
        ttype, value = record.target
        if ttype == "component":
            dst: GraphNode = AppComponent(value, kinds.get(value))
        elif ttype == "system":
            dst = SystemComponent(value)
        elif ttype == "action":
            dst = IntentAction(value)
        else:
            raise ValueError(f"bad target type {ttype!r}")
        dst_id = node_id(dst)
        nodes.setdefault(dst_id, dst)
        edges.setdefault((caller_id, dst_id, record.code), record.content)
    return BehaviorGraph("runtime", nodes, edges)


# ---------------------------------------------------------------------------
# decoupling
# ---------------------------------------------------------------------------


def decouple(rbg: BehaviorGraph) -> list[BehaviorGraph]:
    """Split a (possibly repackaged) graph into per-cluster graphs.

    Removes system-side nodes, takes the weakly connected app-component
    clusters, then gives each cluster a fresh copy of every removed node it
    had an edge to, restoring exactly those edges.  Ordered by descending
    app-component count, then smallest component name.
    """
    if rbg.origin != "runtime":
        raise ValueError("decouple expects a runtime graph")
    app_ids = [nid for nid in rbg.nodes if nid.startswith("app:")]
    if not app_ids:
        return []

    parent = {nid: nid for nid in app_ids}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for src, dst, _ in rbg.edges:
        if src.startswith("app:") and dst.startswith("app:"):
            parent[find(src)] = find(dst)

    clusters: dict[str, set[str]] = {}
    for nid in app_ids:
        clusters.setdefault(find(nid), set()).add(nid)

    out: list[BehaviorGraph] = []
    for members in clusters.values():
        nodes = {nid: rbg.nodes[nid] for nid in members}
        edges: dict[EdgeKey, str | None] = {}
        for (src, dst, code), content in rbg.edges.items():
            assert src.startswith("app:"), "system-to-system edges cannot exist"
            if src in members:
                if not dst.startswith("app:"):
                    nodes.setdefault(dst, rbg.nodes[dst])
                edges[(src, dst, code)] = content
            elif dst in members and not src.startswith("app:"):
                raise AssertionError("edge source is always an app component")
        out.append(BehaviorGraph("runtime", nodes, edges))
    out.sort(key=lambda g: (-g.app_count, min(n.name for n in g.app_components())))
    return out


def is_decoupled(g: BehaviorGraph) -> bool:
    """True when ``g`` is a single app cluster with no orphan system nodes."""
    parts = decouple(g)
    return len(parts) == 1 and parts[0].nodes == g.nodes and parts[0].edges == g.edges
