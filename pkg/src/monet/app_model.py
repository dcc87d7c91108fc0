"""App-package representation: manifest components plus per-method instruction IR.

A package is a desk-scale stand-in for a disassembled mobile app.  It carries
the manifest-declared components (activity, service, receiver, provider) and,
per component, methods made of basic blocks over a tiny instruction set.  Only
intent construction and start-calls are semantic; everything else is either
``nop`` or ``opaque``.

Text format (one file per app, UTF-8, ``#`` comments)::

    package com.example.app
    component activity com.example.Main filters android.intent.action.MAIN
    component service com.example.Svc
    method com.example.Main onCreate {
      b0: v1 = this; v2 = class com.example.Svc; i = intent(v1, v2); start_service(i) -> b1
      b1: nop ->
    }

Each block line is ``<id>: <instr>; ... -> <succ>,<succ>`` (the successor list
may be empty).  Instruction forms::

    v = this
    v = class <class-name>
    v = "literal"
    i = intent(vc, vt)
    i = intent_action(va)
    start_activity(i) | start_service(i) | send_broadcast(i)
    opaque <tag>
    v = opaque <tag>
    nop

``v = opaque <tag>`` is the assigned form of ``opaque``: it defines a variable
whose value static analysis cannot see (the model for encrypted strings,
reflective class lookups and similar).  Block ids ``ENTRY`` and ``EXIT`` are
reserved for the control-flow graph.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

KINDS = ("activity", "service", "receiver", "provider")

_VAR = r"[A-Za-z_][A-Za-z0-9_]*"
_CLASS = r"[A-Za-z_$][A-Za-z0-9_$.]*"
_TAG = r"[A-Za-z0-9_$./:-]+"

VAR_RE = re.compile(rf"{_VAR}$")
CLASS_RE = re.compile(rf"{_CLASS}$")
TAG_RE = re.compile(rf"{_TAG}$")

RESERVED_BLOCK_IDS = ("ENTRY", "EXIT")


class PackageError(Exception):
    """Base for package-IR parse and validation failures."""


class PackageSyntaxError(PackageError):
    def __init__(self, line: int, col: int, expected: str):
        self.line = line
        self.col = col
        self.expected = expected
        super().__init__(f"line {line}, col {col}: expected {expected}")


class DuplicateComponent(PackageError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"duplicate component declaration: {name}")


class UnknownComponentRef(PackageError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"method body references undeclared component: {name}")


@dataclass(frozen=True)
class Instruction:
    """One IR instruction.

    ``defs`` and ``uses`` list the variables written and read; ``arg`` carries
    the op's literal payload (class name, string literal or opaque tag).
    """

    op: str
    arg: str | None = None
    defs: tuple[str, ...] = ()
    uses: tuple[str, ...] = ()


def assign_this(var: str) -> Instruction:
    return Instruction("assign_this", defs=(var,))


def assign_class(var: str, class_name: str) -> Instruction:
    return Instruction("assign_class", arg=class_name, defs=(var,))


def assign_string(var: str, literal: str) -> Instruction:
    return Instruction("assign_string", arg=literal, defs=(var,))


def new_intent_explicit(var: str, caller_var: str, target_var: str) -> Instruction:
    return Instruction("new_intent_explicit", defs=(var,), uses=(caller_var, target_var))


def new_intent_action(var: str, action_var: str) -> Instruction:
    return Instruction("new_intent_action", defs=(var,), uses=(action_var,))


def start_activity(intent_var: str) -> Instruction:
    return Instruction("start_activity", uses=(intent_var,))


def start_service(intent_var: str) -> Instruction:
    return Instruction("start_service", uses=(intent_var,))


def send_broadcast(intent_var: str) -> Instruction:
    return Instruction("send_broadcast", uses=(intent_var,))


def opaque(tag: str, var: str | None = None) -> Instruction:
    return Instruction("opaque", arg=tag, defs=(var,) if var else ())


def nop() -> Instruction:
    return Instruction("nop")


START_OPS = ("start_activity", "start_service", "send_broadcast")

# op -> (#defs, #uses, has_arg); opaque is special-cased (0 or 1 defs).
_ARITY = {
    "assign_this": (1, 0, False),
    "assign_class": (1, 0, True),
    "assign_string": (1, 0, True),
    "new_intent_explicit": (1, 2, False),
    "new_intent_action": (1, 1, False),
    "start_activity": (0, 1, False),
    "start_service": (0, 1, False),
    "send_broadcast": (0, 1, False),
    "nop": (0, 0, False),
}


def _check_instruction(instr: Instruction) -> None:
    if instr.op == "opaque":
        if len(instr.defs) > 1 or instr.uses or instr.arg is None or not TAG_RE.match(instr.arg):
            raise ValueError(f"malformed opaque instruction: {instr}")
    elif instr.op in _ARITY:
        n_defs, n_uses, has_arg = _ARITY[instr.op]
        if len(instr.defs) != n_defs or len(instr.uses) != n_uses:
            raise ValueError(f"instruction arity mismatch: {instr}")
        if has_arg != (instr.arg is not None):
            raise ValueError(f"instruction arg mismatch: {instr}")
        if instr.op == "assign_class" and not CLASS_RE.match(instr.arg or ""):
            raise ValueError(f"bad class name in {instr}")
    else:
        raise ValueError(f"unknown op: {instr.op}")
    for v in (*instr.defs, *instr.uses):
        if not VAR_RE.match(v):
            raise ValueError(f"bad variable name {v!r} in {instr}")


@dataclass(frozen=True)
class MethodIR:
    """A method body: ordered basic blocks plus explicit control-flow edges."""

    name: str
    blocks: tuple[tuple[str, tuple[Instruction, ...]], ...]
    edges: tuple[tuple[str, str], ...]
    entry: str


def validate_method(method: MethodIR) -> None:
    if not VAR_RE.match(method.name):
        raise ValueError(f"bad method name: {method.name!r}")
    ids = [bid for bid, _ in method.blocks]
    seen: set[str] = set()
    for bid in ids:
        if not VAR_RE.match(bid) or bid in RESERVED_BLOCK_IDS:
            raise ValueError(f"bad block id: {bid!r}")
        if bid in seen:
            raise ValueError(f"duplicate block id: {bid}")
        seen.add(bid)
    if method.entry not in seen:
        raise ValueError(f"entry block {method.entry!r} not declared")
    # The text format has no entry marker; the first listed block is the entry.
    if method.blocks and method.entry != method.blocks[0][0]:
        raise ValueError("entry must be the first listed block")
    for src, dst in method.edges:
        if src not in seen or dst not in seen:
            raise ValueError(f"edge references unknown block: {src}->{dst}")
    # The text format lists successors per block line, so edges must be grouped
    # by source block in block order (see make_method).
    order = {bid: n for n, bid in enumerate(ids)}
    positions = [order[src] for src, _ in method.edges]
    if positions != sorted(positions):
        raise ValueError("edges must be grouped by source block in block order")
    for _, instrs in method.blocks:
        for instr in instrs:
            _check_instruction(instr)


def make_method(
    name: str,
    blocks,
    edges,
    entry: str | None = None,
) -> MethodIR:
    """Build a validated :class:`MethodIR`, canonicalizing edge order."""
    blocks_t = tuple((bid, tuple(instrs)) for bid, instrs in blocks)
    order = {bid: n for n, (bid, _) in enumerate(blocks_t)}
    edges_t = tuple(sorted(edges, key=lambda e: order.get(e[0], len(order))))
    method = MethodIR(name, blocks_t, edges_t, entry or (blocks_t[0][0] if blocks_t else ""))
    validate_method(method)
    return method


@dataclass(frozen=True)
class ComponentDecl:
    name: str
    kind: str
    intent_filters: tuple[str, ...] = ()


@dataclass(frozen=True)
class AppPackage:
    """A parsed app package.  Treated as immutable after construction."""

    package_name: str
    components: tuple[ComponentDecl, ...]
    methods: dict[str, tuple[MethodIR, ...]] = field(default_factory=dict)

    def component(self, name: str) -> ComponentDecl | None:
        for c in self.components:
            if c.name == name:
                return c
        return None

    def kinds_by_name(self) -> dict[str, str]:
        return {c.name: c.kind for c in self.components}


def validate_package(pkg: AppPackage) -> None:
    """Raise if ``pkg`` violates a structural invariant."""
    if not CLASS_RE.match(pkg.package_name):
        raise ValueError(f"bad package name: {pkg.package_name!r}")
    if not pkg.components:
        raise ValueError("package declares no components")
    names: set[str] = set()
    for comp in pkg.components:
        if not CLASS_RE.match(comp.name):
            raise ValueError(f"bad component name: {comp.name!r}")
        if comp.kind not in KINDS:
            raise ValueError(f"bad component kind: {comp.kind!r}")
        if comp.name in names:
            raise DuplicateComponent(comp.name)
        names.add(comp.name)
        for action in comp.intent_filters:
            if not CLASS_RE.match(action):
                raise ValueError(f"bad intent filter action: {action!r}")
    for comp_name, methods in pkg.methods.items():
        if comp_name not in names:
            raise UnknownComponentRef(comp_name)
        for m in methods:
            validate_method(m)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_PKG_LINE = re.compile(rf"\s*package\s+({_CLASS})\s*$")
_COMP_LINE = re.compile(
    rf"\s*component\s+(activity|service|receiver|provider)\s+({_CLASS})"
    rf"(?:\s+filters\s+(\S+))?\s*$"
)
_METHOD_LINE = re.compile(rf"\s*method\s+({_CLASS})\s+({_VAR})\s*\{{\s*$")
_BLOCK_HEAD = re.compile(rf"\s*({_VAR})\s*:")

_INSTR_PATTERNS = (
    (re.compile(r"nop$"), lambda m: nop()),
    (re.compile(rf"opaque\s+({_TAG})$"), lambda m: opaque(m.group(1))),
    (re.compile(rf"({_VAR})\s*=\s*opaque\s+({_TAG})$"), lambda m: opaque(m.group(2), m.group(1))),
    (re.compile(rf"({_VAR})\s*=\s*this$"), lambda m: assign_this(m.group(1))),
    (re.compile(rf"({_VAR})\s*=\s*class\s+({_CLASS})$"), lambda m: assign_class(m.group(1), m.group(2))),
    (
        re.compile(rf'({_VAR})\s*=\s*"((?:[^"\\]|\\.)*)"$'),
        lambda m: assign_string(m.group(1), _unescape(m.group(2))),
    ),
    (
        re.compile(rf"({_VAR})\s*=\s*intent\s*\(\s*({_VAR})\s*,\s*({_VAR})\s*\)$"),
        lambda m: new_intent_explicit(m.group(1), m.group(2), m.group(3)),
    ),
    (
        re.compile(rf"({_VAR})\s*=\s*intent_action\s*\(\s*({_VAR})\s*\)$"),
        lambda m: new_intent_action(m.group(1), m.group(2)),
    ),
    (
        re.compile(rf"(start_activity|start_service|send_broadcast)\s*\(\s*({_VAR})\s*\)$"),
        lambda m: Instruction(m.group(1), uses=(m.group(2),)),
    ),
)


def _unescape(s: str) -> str:
    return s.replace('\\"', '"').replace("\\\\", "\\")


def _escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def _strip_comment(line: str) -> str:
    in_string = False
    i = 0
    while i < len(line):
        c = line[i]
        if in_string:
            if c == "\\":
                i += 1
            elif c == '"':
                in_string = False
        elif c == '"':
            in_string = True
        elif c == "#":
            return line[:i]
        i += 1
    return line


def _split_block_body(body: str, lineno: int, base_col: int) -> tuple[list[tuple[str, int]], str]:
    """Split ``instr; instr -> succs`` into instruction segments and the succ text.

    Returns (segments-with-columns, succ_text).  Quote-aware so string
    literals may contain ``;`` and ``->``.
    """
    arrow = -1
    semis: list[int] = []
    in_string = False
    i = 0
    while i < len(body):
        c = body[i]
        if in_string:
            if c == "\\":
                i += 1
            elif c == '"':
                in_string = False
        elif c == '"':
            in_string = True
        elif c == ";":
            semis.append(i)
        elif c == "-" and body[i : i + 2] == "->":
            arrow = i
            break
        i += 1
    if arrow < 0:
        raise PackageSyntaxError(lineno, base_col + len(body), "'->' successor list")
    instr_region = body[:arrow]
    succ_text = body[arrow + 2 :]
    segments: list[tuple[str, int]] = []
    start = 0
    for pos in [*semis, arrow]:
        segments.append((instr_region[start:pos] if pos <= arrow else "", start))
        start = pos + 1
    out: list[tuple[str, int]] = []
    for seg, off in segments:
        if seg.strip():
            out.append((seg.strip(), base_col + off + (len(seg) - len(seg.lstrip()))))
        elif len(segments) > 1:
            raise PackageSyntaxError(lineno, base_col + off, "instruction")
    return out, succ_text


def _parse_instruction(text: str, lineno: int, col: int) -> Instruction:
    for pattern, build in _INSTR_PATTERNS:
        m = pattern.match(text)
        if m:
            return build(m)
    raise PackageSyntaxError(lineno, col, "instruction")


def parse_package(text: str) -> AppPackage:
    """Parse package-IR source into a validated :class:`AppPackage`.

    Raises :class:`PackageSyntaxError`, :class:`DuplicateComponent` or
    :class:`UnknownComponentRef`.
    """
    package_name: str | None = None
    components: list[ComponentDecl] = []
    methods: dict[str, list[MethodIR]] = {}

    lines = text.split("\n")
    i = 0
    while i < len(lines):
        lineno = i + 1
        line = _strip_comment(lines[i])
        i += 1
        if not line.strip():
            continue
        if package_name is None:
            m = _PKG_LINE.match(line)
            if not m:
                raise PackageSyntaxError(lineno, 0, "'package <name>' header")
            package_name = m.group(1)
            continue
        m = _COMP_LINE.match(line)
        if m:
            kind, name, filters_text = m.group(1), m.group(2), m.group(3)
            filters: tuple[str, ...] = ()
            if filters_text:
                parts = filters_text.split(",")
                for p in parts:
                    if not CLASS_RE.match(p):
                        raise PackageSyntaxError(lineno, line.find(filters_text), "action string")
                filters = tuple(parts)
            components.append(ComponentDecl(name, kind, filters))
            continue
        m = _METHOD_LINE.match(line)
        if m:
            comp_name, method_name = m.group(1), m.group(2)
            blocks: list[tuple[str, tuple[Instruction, ...]]] = []
            edges: list[tuple[str, str]] = []
            seen_blocks: set[str] = set()
            closed = False
            while i < len(lines):
                body_lineno = i + 1
                raw = _strip_comment(lines[i])
                i += 1
                if not raw.strip():
                    continue
                if raw.strip() == "}":
                    closed = True
                    break
                bm = _BLOCK_HEAD.match(raw)
                if not bm:
                    raise PackageSyntaxError(body_lineno, 0, "'<block-id>:' or '}'")
                bid = bm.group(1)
                if bid in RESERVED_BLOCK_IDS:
                    raise PackageSyntaxError(body_lineno, bm.start(1), "non-reserved block id")
                if bid in seen_blocks:
                    raise PackageSyntaxError(body_lineno, bm.start(1), "unique block id")
                seen_blocks.add(bid)
                segments, succ_text = _split_block_body(raw[bm.end() :], body_lineno, bm.end())
                instrs = tuple(_parse_instruction(seg, body_lineno, col) for seg, col in segments)
                succs: list[str] = []
                if succ_text.strip():
                    for part in succ_text.strip().split(","):
                        part = part.strip()
                        if not VAR_RE.match(part):
                            raise PackageSyntaxError(body_lineno, raw.find(succ_text), "block id")
                        succs.append(part)
                blocks.append((bid, instrs))
                edges.extend((bid, s) for s in succs)
            if not closed:
                raise PackageSyntaxError(len(lines), 0, "'}'")
            if not blocks:
                raise PackageSyntaxError(lineno, 0, "at least one block")
            for src, dst in edges:
                if dst not in seen_blocks:
                    raise PackageSyntaxError(lineno, 0, f"declared block id (got {dst!r})")
            method = MethodIR(method_name, tuple(blocks), tuple(edges), blocks[0][0])
            methods.setdefault(comp_name, []).append(method)
            continue
        raise PackageSyntaxError(lineno, 0, "'component', 'method' or end of file")

    if package_name is None:
        raise PackageSyntaxError(1, 0, "'package <name>' header")
    if not components:
        raise PackageSyntaxError(len(lines), 0, "at least one component")

    pkg = AppPackage(package_name, tuple(components), {k: tuple(v) for k, v in methods.items()})
    validate_package(pkg)
    return pkg


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------


def _render_instruction(instr: Instruction) -> str:
    op = instr.op
    if op == "nop":
        return "nop"
    if op == "opaque":
        if instr.defs:
            return f"{instr.defs[0]} = opaque {instr.arg}"
        return f"opaque {instr.arg}"
    if op == "assign_this":
        return f"{instr.defs[0]} = this"
    if op == "assign_class":
        return f"{instr.defs[0]} = class {instr.arg}"
    if op == "assign_string":
        return f'{instr.defs[0]} = "{_escape(instr.arg or "")}"'
    if op == "new_intent_explicit":
        return f"{instr.defs[0]} = intent({instr.uses[0]}, {instr.uses[1]})"
    if op == "new_intent_action":
        return f"{instr.defs[0]} = intent_action({instr.uses[0]})"
    if op in START_OPS:
        return f"{op}({instr.uses[0]})"
    raise ValueError(f"unknown op: {op}")


def render_package(pkg: AppPackage) -> str:
    """Render ``pkg`` to canonical package-IR text; inverse of :func:`parse_package`."""
    validate_package(pkg)
    out: list[str] = [f"package {pkg.package_name}", ""]
    for comp in pkg.components:
        line = f"component {comp.kind} {comp.name}"
        if comp.intent_filters:
            line += " filters " + ",".join(comp.intent_filters)
        out.append(line)
    for comp in pkg.components:
        for method in pkg.methods.get(comp.name, ()):
            out.append("")
            out.append(f"method {comp.name} {method.name} {{")
            succs: dict[str, list[str]] = {}
            for src, dst in method.edges:
                succs.setdefault(src, []).append(dst)
            for bid, block_instrs in method.blocks:
                instrs = "; ".join(_render_instruction(x) for x in block_instrs)
                succ = ",".join(succs.get(bid, ()))
                head = f"  {bid}: {instrs}".rstrip()
                out.append(f"{head} -> {succ}".rstrip())
            out.append("}")
    return "\n".join(out) + "\n"
