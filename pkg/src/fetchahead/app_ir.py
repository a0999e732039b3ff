"""Declarative app model: statement types, `.papp` parser/printer, call graph.

An app stands in for an event-driven GUI program. Callbacks and helper
methods have flat statement bodies (no expressions or branching); the
callback control-flow graph (CCFG) is declared in the source, with wait
nodes marking the points where a user action decides the next callback.

`.papp` format (UTF-8, line oriented, `#` comments):

    app <name>
    resource <key> = "<value>"
    setting <key> = "<value>"
    netmethod <name> latency=<ms>
    callback <name> { <stmts> }
    method <name> { <stmts> }
    ccfg { wait <name> ; <node> -> <node> ; ... }

Statements:

    let <var> = "<lit>" | resource(<key>) | setting(<key>) | input(<tag>)
    url <id> = <part> + <part> + ...      # part: "<lit>" | resource(<key>) | <var>
    <netmethod>(<urlId>)
    call <method>
    asynccall <method>
    goto <callback>

plus the three pseudo-statements emitted by the instrumenter:

    send_definition(<var>, <urlId>, <m>)
    trigger_prefetch(<u1>, <u2>, ...)
    fetch_from_proxy(<netmethod>, <urlId>)

String literals may not contain double quotes; there are no escapes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Union

from .errors import ParseError


# ---------------------------------------------------------------------------
# statements
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DefineStatic:
    """`let var = ...` with a statically known source."""

    var: str
    source_kind: str  # "literal" | "resource" | "setting"
    source: str


@dataclass(frozen=True)
class DefineDynamic:
    """`let var = input(tag)`: the value arrives from the user trace."""

    var: str
    input_tag: str


@dataclass(frozen=True)
class UrlPart:
    kind: str  # "literal" | "resource" | "var"
    value: str


@dataclass(frozen=True)
class BuildUrl:
    """The unique statement constructing the URL string for `url_id`."""

    url_id: str
    parts: tuple[UrlPart, ...]


@dataclass(frozen=True)
class NetCall:
    """Network request for a built URL through a declared net method."""

    method: str
    url_id: str


@dataclass(frozen=True)
class Call:
    target: str


@dataclass(frozen=True)
class AsyncCall:
    """Framework-mediated call (worker-style); same runtime semantics as
    Call, but its call-graph edge is tagged as a framework edge."""

    target: str


@dataclass(frozen=True)
class Transition:
    """`goto`: switches to another callback immediately, with no wait node."""

    target: str


# Pseudo-statements inserted by the instrumenter.

@dataclass(frozen=True)
class SendDefinition:
    """Report a freshly assigned value for part `part_index` (1-based) of a
    URL to the proxy."""

    var: str
    url_id: str
    part_index: int


@dataclass(frozen=True)
class TriggerPrefetch:
    url_ids: tuple[str, ...]


@dataclass(frozen=True)
class FetchFromProxy:
    """Replaces a signature NetCall; keeps the original method for the
    cache-miss fallback to the origin."""

    url_id: str
    original_method: str


Stmt = Union[
    DefineStatic, DefineDynamic, BuildUrl, NetCall, Call, AsyncCall,
    Transition, SendDefinition, TriggerPrefetch, FetchFromProxy,
]

PSEUDO_STMTS = (SendDefinition, TriggerPrefetch, FetchFromProxy)


# ---------------------------------------------------------------------------
# containers and the app
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Callback:
    name: str
    body: tuple[Stmt, ...]


@dataclass(frozen=True)
class HelperMethod:
    name: str
    body: tuple[Stmt, ...]


@dataclass(frozen=True)
class NetMethodDecl:
    name: str
    latency_ms: int


@dataclass(frozen=True)
class Ccfg:
    """Declared callback control-flow graph.

    Nodes are callback names plus wait nodes; an edge a->b means b can be
    invoked after a. Wait nodes must have at least one incoming and one
    outgoing edge. Cycles are allowed.
    """

    wait_nodes: tuple[str, ...] = ()
    edges: tuple[tuple[str, str], ...] = ()

    def successors(self, node: str) -> list[str]:
        return [b for a, b in self.edges if a == node]

    def predecessors(self, node: str) -> list[str]:
        return [a for a, b in self.edges if b == node]


@dataclass(frozen=True)
class EcgEdge:
    src: str
    dst: str
    kind: str  # "direct" | "framework"


@dataclass(frozen=True)
class Ecg:
    """Call graph over callbacks and helper methods, extended with
    framework-induced direct edges (from AsyncCall statements)."""

    nodes: tuple[str, ...]
    edges: tuple[EcgEdge, ...]


@dataclass(frozen=True)
class App:
    name: str
    resources: dict[str, str] = field(default_factory=dict)
    settings: dict[str, str] = field(default_factory=dict)
    callbacks: tuple[Callback, ...] = ()
    methods: tuple[HelperMethod, ...] = ()
    ccfg: Ccfg = field(default_factory=Ccfg)
    netlib: tuple[NetMethodDecl, ...] = ()

    # -- lookups -----------------------------------------------------------

    @property
    def callback_names(self) -> list[str]:
        return [c.name for c in self.callbacks]

    @property
    def method_names(self) -> list[str]:
        return [m.name for m in self.methods]

    def containers(self) -> Iterator[tuple[str, tuple[Stmt, ...]]]:
        """(name, body) pairs in program order: callbacks first, then
        helper methods, each in declaration order."""
        for c in self.callbacks:
            yield c.name, c.body
        for m in self.methods:
            yield m.name, m.body

    def body_of(self, name: str) -> tuple[Stmt, ...] | None:
        for n, body in self.containers():
            if n == name:
                return body
        return None

    def url_spots(self) -> dict[str, tuple[str, int, BuildUrl]]:
        """url id -> (container, statement index, BuildUrl) in program order."""
        spots: dict[str, tuple[str, int, BuildUrl]] = {}
        for name, body in self.containers():
            for idx, st in enumerate(body):
                if isinstance(st, BuildUrl) and st.url_id not in spots:
                    spots[st.url_id] = (name, idx, st)
        return spots

    def fetch_method_for(self, url_id: str) -> str | None:
        """Net method used at the first fetch statement for a URL, if any."""
        for _, body in self.containers():
            for st in body:
                if isinstance(st, FetchFromProxy) and st.url_id == url_id:
                    return st.original_method
        for _, body in self.containers():
            for st in body:
                if isinstance(st, NetCall) and st.url_id == url_id:
                    return st.method
        return None

    @property
    def is_instrumented(self) -> bool:
        return any(
            isinstance(st, PSEUDO_STMTS)
            for _, body in self.containers()
            for st in body
        )


# ---------------------------------------------------------------------------
# tokenizer
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r'\s*(?:(?P<str>"[^"]*")'
    r"|(?P<arrow>->)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_.]*)"
    r"|(?P<num>\d+)"
    r"|(?P<sym>[={}()+,;])"
    r"|(?P<bad>\S))"
)


def _tokenize(line: str) -> list[tuple[str, str]]:
    """Tokens as (kind, text); raises ValueError on an illegal character."""
    toks = []
    for m in _TOKEN_RE.finditer(line):
        kind = m.lastgroup
        text = m.group()
        if kind == "bad":
            raise ValueError(f"unexpected character {text.strip()!r}")
        toks.append((kind, text.strip()))
    return toks


class _Cursor:
    def __init__(self, tokens: list[tuple[str, str]]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> tuple[str, str] | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> tuple[str, str]:
        tok = self.peek()
        if tok is None:
            raise ValueError("unexpected end of line")
        self.pos += 1
        return tok

    def expect(self, kind: str, text: str | None = None) -> str:
        k, t = self.next()
        if k != kind or (text is not None and t != text):
            want = text if text is not None else kind
            raise ValueError(f"expected {want!r}, found {t!r}")
        return t

    def at(self, text: str) -> bool:
        tok = self.peek()
        return tok is not None and tok[1] == text

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.pos += 1
            return True
        return False

    def done(self) -> bool:
        return self.pos >= len(self.tokens)


def _unquote(text: str) -> str:
    return text[1:-1]


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

_RESERVED_CALLS = {"resource", "setting", "input"}


def _parse_stmt(cur: _Cursor) -> Stmt:
    kind, text = cur.next()
    if kind == "ident" and text == "let":
        var = cur.expect("ident")
        cur.expect("sym", "=")
        k, t = cur.next()
        if k == "str":
            return DefineStatic(var, "literal", _unquote(t))
        if k == "ident" and t in ("resource", "setting"):
            cur.expect("sym", "(")
            key = cur.expect("ident")
            cur.expect("sym", ")")
            return DefineStatic(var, t, key)
        if k == "ident" and t == "input":
            cur.expect("sym", "(")
            tag = cur.expect("ident")
            cur.expect("sym", ")")
            return DefineDynamic(var, tag)
        raise ValueError(f"bad definition source {t!r}")
    if kind == "ident" and text == "url":
        url_id = cur.expect("ident")
        cur.expect("sym", "=")
        parts = [_parse_url_part(cur)]
        while cur.accept("+"):
            parts.append(_parse_url_part(cur))
        return BuildUrl(url_id, tuple(parts))
    if kind == "ident" and text == "call":
        return Call(cur.expect("ident"))
    if kind == "ident" and text == "asynccall":
        return AsyncCall(cur.expect("ident"))
    if kind == "ident" and text == "goto":
        return Transition(cur.expect("ident"))
    if kind == "ident" and text == "send_definition":
        cur.expect("sym", "(")
        var = cur.expect("ident")
        cur.expect("sym", ",")
        url_id = cur.expect("ident")
        cur.expect("sym", ",")
        m = int(cur.expect("num"))
        cur.expect("sym", ")")
        return SendDefinition(var, url_id, m)
    if kind == "ident" and text == "trigger_prefetch":
        cur.expect("sym", "(")
        urls = [cur.expect("ident")]
        while cur.accept(","):
            urls.append(cur.expect("ident"))
        cur.expect("sym", ")")
        return TriggerPrefetch(tuple(urls))
    if kind == "ident" and text == "fetch_from_proxy":
        cur.expect("sym", "(")
        method = cur.expect("ident")
        cur.expect("sym", ",")
        url_id = cur.expect("ident")
        cur.expect("sym", ")")
        return FetchFromProxy(url_id, method)
    if kind == "ident":
        # bare `<name>(<urlId>)` is a network call
        if text in _RESERVED_CALLS:
            raise ValueError(f"{text!r} cannot start a statement")
        cur.expect("sym", "(")
        url_id = cur.expect("ident")
        cur.expect("sym", ")")
        return NetCall(text, url_id)
    raise ValueError(f"bad statement start {text!r}")


def _parse_url_part(cur: _Cursor) -> UrlPart:
    k, t = cur.next()
    if k == "str":
        return UrlPart("literal", _unquote(t))
    if k == "ident" and t == "resource":
        cur.expect("sym", "(")
        key = cur.expect("ident")
        cur.expect("sym", ")")
        return UrlPart("resource", key)
    if k == "ident":
        return UrlPart("var", t)
    raise ValueError(f"bad url part {t!r}")


def _strip_comment(line: str) -> str:
    # '#' starts a comment unless inside a string literal
    out = []
    in_str = False
    for ch in line:
        if ch == '"':
            in_str = not in_str
        if ch == "#" and not in_str:
            break
        out.append(ch)
    return "".join(out)


def parse_app(text: str) -> App:
    """Parse `.papp` source into a validated App.

    Raises ParseError carrying (line, message) diagnostics for every
    problem found, both syntactic and structural.
    """
    diags: list[tuple[int, str]] = []
    name: str | None = None
    resources: dict[str, str] = {}
    settings: dict[str, str] = {}
    netlib: list[NetMethodDecl] = []
    callbacks: list[Callback] = []
    methods: list[HelperMethod] = []
    wait_nodes: list[str] = []
    ccfg_edges: list[tuple[str, str]] = []
    stmt_lines: dict[tuple[str, int], int] = {}
    decl_lines: dict[str, int] = {}

    lines = text.splitlines()
    i = 0
    n = len(lines)

    def block_lines(start: int) -> tuple[list[tuple[int, list[tuple[str, str]]]], int]:
        """Tokenized statement lines of a { } block starting after `start`."""
        rows = []
        j = start + 1
        while j < n:
            raw = _strip_comment(lines[j])
            try:
                toks = _tokenize(raw)
            except ValueError as e:
                diags.append((j + 1, str(e)))
                j += 1
                continue
            if len(toks) == 1 and toks[0][1] == "}":
                return rows, j
            if toks:
                rows.append((j, toks))
            j += 1
        diags.append((start + 1, "unterminated block"))
        return rows, n - 1

    def parse_body(rows) -> tuple[Stmt, ...]:
        body: list[Stmt] = []
        for lineno, toks in rows:
            cur = _Cursor(toks)
            while not cur.done():
                try:
                    st = _parse_stmt(cur)
                except ValueError as e:
                    diags.append((lineno + 1, str(e)))
                    break
                body.append(st)
                stmt_lines[(current_container[0], len(body) - 1)] = lineno + 1
                if not cur.done() and not cur.accept(";"):
                    diags.append((lineno + 1, "trailing tokens after statement"))
                    break
        return tuple(body)

    current_container = [""]

    while i < n:
        raw = _strip_comment(lines[i])
        try:
            toks = _tokenize(raw)
        except ValueError as e:
            diags.append((i + 1, str(e)))
            i += 1
            continue
        if not toks:
            i += 1
            continue
        cur = _Cursor(toks)
        _, head = cur.next()
        try:
            if head == "app":
                if name is not None:
                    raise ValueError("duplicate app declaration")
                name = cur.expect("ident")
            elif head in ("resource", "setting"):
                key = cur.expect("ident")
                cur.expect("sym", "=")
                value = _unquote(cur.expect("str"))
                table = resources if head == "resource" else settings
                if key in table:
                    raise ValueError(f"duplicate {head} key '{key}'")
                table[key] = value
            elif head == "netmethod":
                mname = cur.expect("ident")
                cur.expect("ident", "latency")
                cur.expect("sym", "=")
                ms = int(cur.expect("num"))
                if any(m.name == mname for m in netlib):
                    raise ValueError(f"duplicate netmethod '{mname}'")
                netlib.append(NetMethodDecl(mname, ms))
            elif head in ("callback", "method"):
                cname = cur.expect("ident")
                cur.expect("sym", "{")
                if not cur.done():
                    diags.append((i + 1, "statements must start on the next line"))
                decl_lines.setdefault(cname, i + 1)
                current_container[0] = cname
                rows, close = block_lines(i)
                body = parse_body(rows)
                if head == "callback":
                    callbacks.append(Callback(cname, body))
                else:
                    methods.append(HelperMethod(cname, body))
                i = close
            elif head == "ccfg":
                cur.expect("sym", "{")
                if not cur.done():
                    diags.append((i + 1, "edges must start on the next line"))
                rows, close = block_lines(i)
                for lineno, rtoks in rows:
                    rcur = _Cursor(rtoks)
                    while not rcur.done():
                        try:
                            if rcur.accept("wait"):
                                wname = rcur.expect("ident")
                                if wname in wait_nodes:
                                    raise ValueError(f"duplicate wait node '{wname}'")
                                wait_nodes.append(wname)
                            else:
                                a = rcur.expect("ident")
                                rcur.expect("arrow")
                                b = rcur.expect("ident")
                                ccfg_edges.append((a, b))
                        except ValueError as e:
                            diags.append((lineno + 1, str(e)))
                            break
                        if not rcur.done() and not rcur.accept(";"):
                            diags.append((lineno + 1, "trailing tokens after edge"))
                            break
                i = close
            else:
                raise ValueError(f"unknown declaration '{head}'")
            if head not in ("callback", "method", "ccfg") and not cur.done():
                raise ValueError("trailing tokens after declaration")
        except ValueError as e:
            diags.append((i + 1, str(e)))
        i += 1

    if name is None:
        diags.append((1, "missing app declaration"))
        name = ""

    app = App(
        name=name,
        resources=resources,
        settings=settings,
        callbacks=tuple(callbacks),
        methods=tuple(methods),
        ccfg=Ccfg(tuple(wait_nodes), tuple(ccfg_edges)),
        netlib=tuple(netlib),
    )
    reported = {msg for _, msg in diags}
    for loc, msg in _structural_problems(app):
        if msg in reported:
            continue
        if loc is None:
            diags.append((0, msg))
        else:
            line = stmt_lines.get(loc, decl_lines.get(loc[0], 0))
            diags.append((line, msg))
    if diags:
        raise ParseError(sorted(diags))
    return app


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _structural_problems(app: App) -> list[tuple[tuple[str, int] | None, str]]:
    """Structural defects as ((container, stmt_index) | None, message)."""
    problems: list[tuple[tuple[str, int] | None, str]] = []
    names: set[str] = set()
    for cname in list(app.callback_names) + list(app.method_names):
        if cname in names:
            problems.append((None, f"duplicate name '{cname}'"))
        names.add(cname)
    netmethods = {m.name for m in app.netlib}
    callbacks = set(app.callback_names)

    url_owner: dict[str, tuple[str, int]] = {}
    defined_vars: set[str] = set()
    for name, body in app.containers():
        for idx, st in enumerate(body):
            if isinstance(st, BuildUrl):
                if st.url_id in url_owner:
                    problems.append(
                        ((name, idx), f"duplicate url spot for '{st.url_id}'")
                    )
                else:
                    url_owner[st.url_id] = (name, idx)
            elif isinstance(st, (DefineStatic, DefineDynamic)):
                defined_vars.add(st.var)

    for name, body in app.containers():
        for idx, st in enumerate(body):
            loc = (name, idx)
            if isinstance(st, NetCall):
                if st.method not in netmethods:
                    problems.append((loc, f"unresolved netmethod '{st.method}'"))
                if st.url_id not in url_owner:
                    problems.append((loc, f"unresolved url '{st.url_id}'"))
            elif isinstance(st, FetchFromProxy):
                if st.original_method not in netmethods:
                    problems.append(
                        (loc, f"unresolved netmethod '{st.original_method}'")
                    )
                if st.url_id not in url_owner:
                    problems.append((loc, f"unresolved url '{st.url_id}'"))
            elif isinstance(st, (Call, AsyncCall)):
                if st.target not in names:
                    problems.append((loc, f"unresolved call target '{st.target}'"))
            elif isinstance(st, Transition):
                if st.target not in callbacks:
                    problems.append((loc, f"unresolved callback '{st.target}'"))
            elif isinstance(st, BuildUrl):
                for part in st.parts:
                    if part.kind == "var" and part.value not in defined_vars:
                        problems.append(
                            (loc, f"unresolved variable '{part.value}'")
                        )
            elif isinstance(st, SendDefinition):
                if st.url_id not in url_owner:
                    problems.append((loc, f"unresolved url '{st.url_id}'"))
                else:
                    spot = url_owner[st.url_id]
                    arity = len(app.body_of(spot[0])[spot[1]].parts)
                    if not 1 <= st.part_index <= arity:
                        problems.append(
                            (loc, f"url '{st.url_id}' has no part {st.part_index}")
                        )
                if st.var not in defined_vars:
                    problems.append((loc, f"unresolved variable '{st.var}'"))
            elif isinstance(st, TriggerPrefetch):
                # url ids here may be hint-seeded (no URL spot in the app),
                # so resolution is not required; the proxy skips unknowns
                if not st.url_ids:
                    problems.append((loc, "trigger_prefetch needs at least one url"))

    waits = set(app.ccfg.wait_nodes)
    ccfg_nodes = callbacks | waits
    for w in waits:
        if w in names:
            problems.append((None, f"wait node '{w}' collides with a callback or method name"))
    for a, b in app.ccfg.edges:
        for endpoint in (a, b):
            if endpoint not in ccfg_nodes:
                problems.append((None, f"unknown ccfg node '{endpoint}'"))
    for w in app.ccfg.wait_nodes:
        if not app.ccfg.predecessors(w):
            problems.append((None, f"wait node '{w}' has no incoming edge"))
        if not app.ccfg.successors(w):
            problems.append((None, f"wait node '{w}' has no outgoing edge"))
    return problems


def validate_app(app: App) -> None:
    """Validate a programmatically built App; raises ParseError (line 0)."""
    problems = _structural_problems(app)
    if problems:
        raise ParseError([(0, msg) for _, msg in problems])


# ---------------------------------------------------------------------------
# printer
# ---------------------------------------------------------------------------

def _print_part(part: UrlPart) -> str:
    if part.kind == "literal":
        return f'"{part.value}"'
    if part.kind == "resource":
        return f"resource({part.value})"
    return part.value


def print_stmt(st: Stmt) -> str:
    if isinstance(st, DefineStatic):
        if st.source_kind == "literal":
            return f'let {st.var} = "{st.source}"'
        return f"let {st.var} = {st.source_kind}({st.source})"
    if isinstance(st, DefineDynamic):
        return f"let {st.var} = input({st.input_tag})"
    if isinstance(st, BuildUrl):
        return f"url {st.url_id} = " + " + ".join(_print_part(p) for p in st.parts)
    if isinstance(st, NetCall):
        return f"{st.method}({st.url_id})"
    if isinstance(st, Call):
        return f"call {st.target}"
    if isinstance(st, AsyncCall):
        return f"asynccall {st.target}"
    if isinstance(st, Transition):
        return f"goto {st.target}"
    if isinstance(st, SendDefinition):
        return f"send_definition({st.var}, {st.url_id}, {st.part_index})"
    if isinstance(st, TriggerPrefetch):
        return f"trigger_prefetch({', '.join(st.url_ids)})"
    if isinstance(st, FetchFromProxy):
        return f"fetch_from_proxy({st.original_method}, {st.url_id})"
    raise TypeError(f"unknown statement {st!r}")


def print_app(app: App) -> str:
    """Canonical `.papp` text; parse_app(print_app(a)) == a."""
    out = [f"app {app.name}"]
    for key, value in app.resources.items():
        out.append(f'resource {key} = "{value}"')
    for key, value in app.settings.items():
        out.append(f'setting {key} = "{value}"')
    for m in app.netlib:
        out.append(f"netmethod {m.name} latency={m.latency_ms}")
    for kind, items in (("callback", app.callbacks), ("method", app.methods)):
        for c in items:
            out.append(f"{kind} {c.name} {{")
            for st in c.body:
                out.append(f"  {print_stmt(st)}")
            out.append("}")
    out.append("ccfg {")
    for w in app.ccfg.wait_nodes:
        out.append(f"  wait {w}")
    for a, b in app.ccfg.edges:
        out.append(f"  {a} -> {b}")
    out.append("}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# extended call graph
# ---------------------------------------------------------------------------

def build_ecg(app: App) -> Ecg:
    """Call graph from Call/AsyncCall statements; AsyncCall edges are
    tagged "framework". Deterministic: first-encounter order."""
    nodes = tuple(app.callback_names) + tuple(app.method_names)
    edges: list[EcgEdge] = []
    seen: set[tuple[str, str, str]] = set()
    for name, body in app.containers():
        for st in body:
            if isinstance(st, Call):
                dst, kind = st.target, "direct"
            elif isinstance(st, AsyncCall):
                dst, kind = st.target, "framework"
            else:
                continue
            key = (name, dst, kind)
            if key not in seen:
                seen.add(key)
                edges.append(EcgEdge(name, dst, kind))
    return Ecg(nodes, tuple(edges))
