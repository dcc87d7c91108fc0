"""Persistent signature database: family graphs, SSS blacklist, count index.

A store is an immutable snapshot.  ``insert_signature`` returns a new store
sharing unchanged data with the old one; service code swaps the reference
atomically so readers never observe a partial update.

On disk a store is a directory::

    store.json                  manifest: format/version, families, blacklist
    graphs/<family>/<ordinal>.json   canonical graph blobs
    store.crc                   CRC-32 over manifest and graph blobs

The index is rebuilt on load rather than persisted (corruption resistance
beats load time at this scale).  Loading is fail-closed: a bad checksum or
unknown format aborts with nothing partially loaded.
"""

from __future__ import annotations

import json
import re
import zlib
from dataclasses import dataclass, field
from pathlib import Path

from .behavior_graph import BehaviorGraph, CorruptGraph, graph_from_json, graph_to_json, is_decoupled
from .bptree import DEFAULT_ORDER, BplusIndex
from .matcher import NotDecoupled
from .trace import normalize_endpoint

FORMAT_VERSION = 1
DEFAULT_ALPHA = 5

_FAMILY_ID_RE = re.compile(r"[A-Za-z0-9._-]+$")


class StoreError(Exception):
    pass


class FormatVersionMismatch(StoreError):
    pass


class ChecksumMismatch(StoreError):
    pass


class StoreIOError(StoreError):
    pass


@dataclass(frozen=True)
class FamilySignature:
    """Analyst-curated malicious decoupled graphs for one malware family."""

    family_id: str
    graphs: tuple[BehaviorGraph, ...]
    notes: str = ""


@dataclass(frozen=True)
class SssBlacklist:
    endpoints: frozenset[str] = frozenset()
    executables: frozenset[str] = frozenset()

    @classmethod
    def of(cls, endpoints=(), executables=()) -> "SssBlacklist":
        return cls(
            frozenset(normalize_endpoint(e) for e in endpoints),
            frozenset(executables),
        )


@dataclass(frozen=True)
class GraphRef:
    family_id: str
    ordinal: int


@dataclass(frozen=True)
class SignatureStore:
    families: dict[str, FamilySignature] = field(default_factory=dict)
    blacklist: SssBlacklist = SssBlacklist()
    index: BplusIndex = field(default_factory=BplusIndex)
    version: int = 0

    def graph(self, ref: GraphRef) -> BehaviorGraph:
        return self.families[ref.family_id].graphs[ref.ordinal]

    def graph_count(self) -> int:
        return sum(len(f.graphs) for f in self.families.values())

    def range_candidates(self, n: int, alpha: int = DEFAULT_ALPHA) -> list[GraphRef]:
        """Stored graphs whose app-component count lies within n ± alpha."""
        if alpha < 0:
            raise ValueError("alpha must be non-negative")
        return self.index.range(max(0, n - alpha), n + alpha)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SignatureStore)
            and self.families == other.families
            and self.blacklist == other.blacklist
            and self.version == other.version
        )


def empty_store(order: int = DEFAULT_ORDER) -> SignatureStore:
    return SignatureStore(index=BplusIndex(order))


def insert_signature(store: SignatureStore, family: FamilySignature) -> SignatureStore:
    """Add (or merge into) a family; returns a new store snapshot.

    Graphs must each be a single decoupled app cluster; duplicates within the
    family (by canonical serialization) are dropped, so re-inserting the same
    family is idempotent up to the version counter.
    """
    if not _FAMILY_ID_RE.match(family.family_id):
        raise ValueError(f"family id unsafe for storage: {family.family_id!r}")
    for g in family.graphs:
        if g.origin != "runtime":
            raise CorruptGraph("family graphs must have runtime origin")
        if not is_decoupled(g):
            raise NotDecoupled(f"family {family.family_id}: graph is not a single app cluster")

    existing = store.families.get(family.family_id)
    kept = list(existing.graphs) if existing else []
    seen = {graph_to_json(g) for g in kept}
    index = store.index
    for g in family.graphs:
        blob = graph_to_json(g)
        if blob in seen:
            continue
        seen.add(blob)
        index = index.insert(g.app_count, GraphRef(family.family_id, len(kept)))
        kept.append(g)

    notes = family.notes or (existing.notes if existing else "")
    families = dict(store.families)
    families[family.family_id] = FamilySignature(family.family_id, tuple(kept), notes)
    return SignatureStore(families, store.blacklist, index, store.version + 1)


def merge_blacklist(store: SignatureStore, endpoints=(), executables=()) -> SignatureStore:
    bl = SssBlacklist(
        store.blacklist.endpoints | frozenset(normalize_endpoint(e) for e in endpoints),
        store.blacklist.executables | frozenset(executables),
    )
    return SignatureStore(dict(store.families), bl, store.index, store.version + 1)


def rebuild_index(store: SignatureStore, order: int = DEFAULT_ORDER) -> BplusIndex:
    index = BplusIndex(order)
    for fid in sorted(store.families):
        for ordinal, g in enumerate(store.families[fid].graphs):
            index = index.insert(g.app_count, GraphRef(fid, ordinal))
    return index


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def _manifest_json(store: SignatureStore) -> str:
    obj = {
        "format": FORMAT_VERSION,
        "version": store.version,
        "families": [
            {
                "family_id": fid,
                "notes": store.families[fid].notes,
                "graph_count": len(store.families[fid].graphs),
            }
            for fid in sorted(store.families)
        ],
        "blacklist": {
            "endpoints": sorted(store.blacklist.endpoints),
            "executables": sorted(store.blacklist.executables),
        },
    }
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _graph_rel_paths(family_counts: list[tuple[str, int]]) -> list[str]:
    out = []
    for fid, count in sorted(family_counts):
        out.extend(f"graphs/{fid}/{ordinal}.json" for ordinal in range(count))
    return out


def _checksum(root: Path, rel_paths: list[str]) -> str:
    crc = 0
    for rel in ["store.json", *rel_paths]:
        try:
            data = (root / rel).read_bytes()
        except OSError as exc:
            raise ChecksumMismatch(f"missing or unreadable {rel}: {exc}") from exc
        crc = zlib.crc32(rel.encode() + b"\0" + data + b"\0", crc)
    return f"{crc:08x}"


def save_store(store: SignatureStore, path) -> None:
    root = Path(path)
    try:
        root.mkdir(parents=True, exist_ok=True)
        (root / "store.json").write_text(_manifest_json(store), encoding="utf-8")
        for fid in sorted(store.families):
            fam_dir = root / "graphs" / fid
            fam_dir.mkdir(parents=True, exist_ok=True)
            for ordinal, g in enumerate(store.families[fid].graphs):
                (fam_dir / f"{ordinal}.json").write_text(graph_to_json(g), encoding="utf-8")
        rels = _graph_rel_paths([(fid, len(f.graphs)) for fid, f in store.families.items()])
        (root / "store.crc").write_text(_checksum(root, rels) + "\n", encoding="utf-8")
    except OSError as exc:
        raise StoreIOError(f"cannot write store at {root}: {exc}") from exc


def load_store(path, order: int = DEFAULT_ORDER) -> SignatureStore:
    """Load a store directory; fail-closed on any corruption."""
    root = Path(path)
    try:
        manifest_text = (root / "store.json").read_text(encoding="utf-8")
        crc_text = (root / "store.crc").read_text(encoding="utf-8").strip()
    except OSError as exc:
        raise StoreIOError(f"cannot read store at {root}: {exc}") from exc
    try:
        manifest = json.loads(manifest_text)
    except json.JSONDecodeError as exc:
        raise ChecksumMismatch(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(manifest, dict) or manifest.get("format") != FORMAT_VERSION:
        raise FormatVersionMismatch(
            f"unsupported store format {manifest.get('format')!r} (want {FORMAT_VERSION})"
        )
    family_counts = [(f["family_id"], f["graph_count"]) for f in manifest["families"]]
    if _checksum(root, _graph_rel_paths(family_counts)) != crc_text:
        raise ChecksumMismatch("store checksum mismatch")

    families: dict[str, FamilySignature] = {}
    for entry in manifest["families"]:
        fid = entry["family_id"]
        graphs = []
        for ordinal in range(entry["graph_count"]):
            blob = (root / "graphs" / fid / f"{ordinal}.json").read_text(encoding="utf-8")
            graphs.append(graph_from_json(blob))
        families[fid] = FamilySignature(fid, tuple(graphs), entry.get("notes", ""))
    blacklist = SssBlacklist(
        frozenset(manifest["blacklist"]["endpoints"]),
        frozenset(manifest["blacklist"]["executables"]),
    )
    store = SignatureStore(families, blacklist, BplusIndex(order), int(manifest["version"]))
    return SignatureStore(families, blacklist, rebuild_index(store, order), store.version)
