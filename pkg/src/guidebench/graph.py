"""Guideline decision graph: node references, parsing, validation, traversal.

A graph is a set of pages, each holding an ordered list of nodes. Decision
nodes carry child references; recommendation nodes are terminal and carry
treatment text. Paths are simple (duplicate-free) ordered node sequences.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping

from .errors import CycleError, DanglingEdgeError, GraphSchemaError, PathParseError

# Page is uppercase alphanumeric components joined by hyphens; the final
# hyphen-separated integer is the node ordinal ("NSCL-2-1" -> page NSCL-2, ord 1).
_REF_RE = re.compile(r"^([A-Z0-9]+(?:-[A-Z0-9]+)*)-([0-9]+)$")

# Maximal arrow-separated runs of ref-shaped tokens inside free text.
_REF_TOKEN = r"[A-Z0-9]+(?:-[A-Z0-9]+)*-[0-9]+"
_SEQUENCE_RE = re.compile(rf"{_REF_TOKEN}(?:\s*(?:→|->|=>)\s*{_REF_TOKEN})*")

_ARROW_SPLIT_RE = re.compile(r"→|->|=>")

CANONICAL_ARROW = " → "


@dataclass(frozen=True, order=True)
class NodeRef:
    """Compound node identifier: page plus 1-based ordinal within the page."""

    page_id: str
    node_ord: int

    def __post_init__(self):
        if not self.page_id:
            raise ValueError("page_id must be nonempty")
        if self.node_ord < 1:
            raise ValueError(f"node_ord must be >= 1, got {self.node_ord}")

    def render(self) -> str:
        return f"{self.page_id}-{self.node_ord}"

    @classmethod
    def parse(cls, token: str) -> "NodeRef":
        m = _REF_RE.match(token)
        if not m:
            raise PathParseError(f"malformed node reference {token!r}")
        ord_ = int(m.group(2))
        if ord_ < 1:
            raise PathParseError(f"node ordinal must be >= 1 in {token!r}")
        return cls(page_id=m.group(1), node_ord=ord_)

    def __str__(self) -> str:
        return self.render()


class NodeKind(str, Enum):
    DECISION = "decision"
    RECOMMENDATION = "recommendation"


@dataclass(frozen=True)
class GuidelineNode:
    ref: NodeRef
    label: str
    kind: NodeKind
    children: tuple[NodeRef, ...] = ()
    treatment_text: str | None = None

    def __post_init__(self):
        if self.kind is NodeKind.RECOMMENDATION:
            if self.children:
                raise GraphSchemaError(f"recommendation node {self.ref} must not have children")
            if not self.treatment_text:
                raise GraphSchemaError(f"recommendation node {self.ref} requires treatment text")
        else:
            if not self.children:
                raise GraphSchemaError(f"decision node {self.ref} must have children")


@dataclass(frozen=True)
class GuidelinePath:
    """Ordered, duplicate-free node sequence; may stop short of a terminal."""

    nodes: tuple[NodeRef, ...]
    terminal_reached: bool = False

    def __post_init__(self):
        if not self.nodes:
            raise PathParseError("empty path")
        seen: set[NodeRef] = set()
        for ref in self.nodes:
            if ref in seen:
                raise PathParseError(f"duplicate node {ref.render()} in path")
            seen.add(ref)

    @property
    def final(self) -> NodeRef:
        return self.nodes[-1]

    def node_set(self) -> frozenset[NodeRef]:
        return frozenset(self.nodes)

    def render(self) -> str:
        return CANONICAL_ARROW.join(ref.render() for ref in self.nodes)

    def __str__(self) -> str:
        return self.render()


class GuidelineGraph:
    """Validated decision graph; immutable after construction."""

    def __init__(self, pages: Mapping[str, Iterable[GuidelineNode]], roots: Iterable[NodeRef]):
        self._pages: dict[str, tuple[GuidelineNode, ...]] = {
            page: tuple(nodes) for page, nodes in pages.items()
        }
        self._roots: tuple[NodeRef, ...] = tuple(roots)
        self._by_ref: dict[NodeRef, GuidelineNode] = {}
        for page, nodes in self._pages.items():
            for node in nodes:
                if node.ref.page_id != page:
                    raise GraphSchemaError(
                        f"node {node.ref} listed under page {page!r}"
                    )
                if node.ref in self._by_ref:
                    raise GraphSchemaError(f"duplicate node id {node.ref}")
                self._by_ref[node.ref] = node
        self._validate()

    @property
    def pages(self) -> Mapping[str, tuple[GuidelineNode, ...]]:
        return self._pages

    @property
    def roots(self) -> tuple[NodeRef, ...]:
        return self._roots

    def nodes(self) -> Iterable[GuidelineNode]:
        for nodes in self._pages.values():
            yield from nodes

    def get(self, ref: NodeRef) -> GuidelineNode | None:
        return self._by_ref.get(ref)

    def node(self, ref: NodeRef) -> GuidelineNode:
        node = self._by_ref.get(ref)
        if node is None:
            raise KeyError(f"unknown node {ref.render()}")
        return node

    def __contains__(self, ref: NodeRef) -> bool:
        return ref in self._by_ref

    def __len__(self) -> int:
        return len(self._by_ref)

    def is_edge(self, parent: NodeRef, child: NodeRef) -> bool:
        node = self._by_ref.get(parent)
        return node is not None and child in node.children

    def recommendation_refs(self) -> tuple[NodeRef, ...]:
        return tuple(n.ref for n in self.nodes() if n.kind is NodeKind.RECOMMENDATION)

    def descendants(self, ref: NodeRef) -> frozenset[NodeRef]:
        return self._descendants[ref]

    def _validate(self) -> None:
        if not self._roots:
            raise GraphSchemaError("graph must declare at least one root")
        for node in self.nodes():
            for child in node.children:
                if child not in self._by_ref:
                    raise DanglingEdgeError(child.render(), node.ref.render())
        for root in self._roots:
            if root not in self._by_ref:
                raise DanglingEdgeError(root.render(), "<roots>")

        # Cycle check: iterative three-color DFS over all nodes.
        WHITE, GRAY, BLACK = 0, 1, 2
        color: dict[NodeRef, int] = {ref: WHITE for ref in self._by_ref}
        for start in self._by_ref:
            if color[start] != WHITE:
                continue
            stack: list[tuple[NodeRef, int]] = [(start, 0)]
            color[start] = GRAY
            while stack:
                ref, child_idx = stack[-1]
                children = self._by_ref[ref].children
                if child_idx < len(children):
                    stack[-1] = (ref, child_idx + 1)
                    child = children[child_idx]
                    if color[child] == GRAY:
                        raise CycleError(child.render())
                    if color[child] == WHITE:
                        color[child] = GRAY
                        stack.append((child, 0))
                else:
                    color[ref] = BLACK
                    stack.pop()

        # Every root must be able to end at a recommendation.
        for root in self._roots:
            if not self._reaches_recommendation(root):
                raise GraphSchemaError(
                    f"no recommendation node reachable from root {root.render()}"
                )

        # Descendant sets, in reverse topological order (the graph is acyclic).
        self._descendants: dict[NodeRef, frozenset[NodeRef]] = {}
        ordered: list[NodeRef] = []
        seen: set[NodeRef] = set()
        for start in self._by_ref:
            if start in seen:
                continue
            stack = [(start, 0)]
            seen.add(start)
            while stack:
                ref, child_idx = stack[-1]
                children = self._by_ref[ref].children
                if child_idx < len(children):
                    stack[-1] = (ref, child_idx + 1)
                    child = children[child_idx]
                    if child not in seen:
                        seen.add(child)
                        stack.append((child, 0))
                else:
                    ordered.append(ref)
                    stack.pop()
        for ref in ordered:
            acc: set[NodeRef] = set()
            for child in self._by_ref[ref].children:
                acc.add(child)
                acc |= self._descendants[child]
            self._descendants[ref] = frozenset(acc)

    def _reaches_recommendation(self, start: NodeRef) -> bool:
        seen = {start}
        frontier = [start]
        while frontier:
            node = self._by_ref[frontier.pop()]
            if node.kind is NodeKind.RECOMMENDATION:
                return True
            for child in node.children:
                if child not in seen:
                    seen.add(child)
                    frontier.append(child)
        return False

    def to_payload(self) -> dict:
        """Plain-dict form matching the graph file schema."""
        pages = {}
        for page, nodes in self._pages.items():
            entries = []
            for node in nodes:
                entry: dict = {
                    "id": node.ref.render(),
                    "label": node.label,
                    "kind": node.kind.value,
                    "children": [c.render() for c in node.children],
                }
                if node.treatment_text is not None:
                    entry["treatment"] = node.treatment_text
                entries.append(entry)
            pages[page] = entries
        return {"pages": pages, "roots": [r.render() for r in self._roots]}

    def canonical_json(self) -> str:
        return json.dumps(self.to_payload(), sort_keys=True, indent=2)


def parse_graph(document: str | Mapping) -> GuidelineGraph:
    """Parse and validate a graph document (JSON text or an already-loaded dict)."""
    if isinstance(document, str):
        try:
            payload = json.loads(document)
        except json.JSONDecodeError as exc:
            raise GraphSchemaError(f"graph document is not valid JSON: {exc}") from exc
    else:
        payload = document
    if not isinstance(payload, Mapping):
        raise GraphSchemaError("graph document must be a JSON object")
    pages_raw = payload.get("pages")
    roots_raw = payload.get("roots")
    if not isinstance(pages_raw, Mapping):
        raise GraphSchemaError("missing or mistyped 'pages' mapping")
    if not isinstance(roots_raw, list) or not roots_raw:
        raise GraphSchemaError("missing or empty 'roots' list")

    pages: dict[str, list[GuidelineNode]] = {}
    for page_id, entries in pages_raw.items():
        if not isinstance(entries, list):
            raise GraphSchemaError(f"page {page_id!r} must hold a list of nodes")
        nodes = []
        for entry in entries:
            nodes.append(_parse_node(page_id, entry))
        pages[page_id] = nodes

    roots = []
    for raw in roots_raw:
        if not isinstance(raw, str):
            raise GraphSchemaError("root ids must be strings")
        try:
            roots.append(NodeRef.parse(raw))
        except PathParseError as exc:
            raise GraphSchemaError(str(exc)) from exc
    return GuidelineGraph(pages, roots)


def _parse_node(page_id: str, entry) -> GuidelineNode:
    if not isinstance(entry, Mapping):
        raise GraphSchemaError(f"node entries under page {page_id!r} must be objects")
    for key, typ in (("id", str), ("label", str), ("kind", str)):
        if not isinstance(entry.get(key), typ):
            raise GraphSchemaError(f"node under page {page_id!r} missing {key!r} string")
    try:
        ref = NodeRef.parse(entry["id"])
    except PathParseError as exc:
        raise GraphSchemaError(str(exc)) from exc
    try:
        kind = NodeKind(entry["kind"])
    except ValueError:
        raise GraphSchemaError(f"node {entry['id']}: unknown kind {entry['kind']!r}")
    children_raw = entry.get("children", [])
    if not isinstance(children_raw, list):
        raise GraphSchemaError(f"node {entry['id']}: 'children' must be a list")
    children = []
    for raw in children_raw:
        if not isinstance(raw, str):
            raise GraphSchemaError(f"node {entry['id']}: child ids must be strings")
        try:
            children.append(NodeRef.parse(raw))
        except PathParseError as exc:
            raise GraphSchemaError(str(exc)) from exc
    treatment = entry.get("treatment")
    if treatment is not None and not isinstance(treatment, str):
        raise GraphSchemaError(f"node {entry['id']}: 'treatment' must be a string")
    return GuidelineNode(
        ref=ref,
        label=entry["label"],
        kind=kind,
        children=tuple(children),
        treatment_text=treatment,
    )


def load_graph(path) -> GuidelineGraph:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_graph(fh.read())


def parse_path_string(text: str) -> GuidelinePath:
    """Split on arrow separators (→, ->, =>), trim, and parse each token."""
    if not text or not text.strip():
        raise PathParseError("empty path")
    tokens = [tok.strip() for tok in _ARROW_SPLIT_RE.split(text)]
    refs: list[NodeRef] = []
    for pos, token in enumerate(tokens, start=1):
        if not token:
            raise PathParseError(f"empty token at position {pos}")
        try:
            refs.append(NodeRef.parse(token))
        except PathParseError:
            raise PathParseError(f"malformed token {token!r} at position {pos}")
    return GuidelinePath(nodes=tuple(refs))


def render_path(path: GuidelinePath) -> str:
    return path.render()


def extract_last_path(text: str) -> GuidelinePath | None:
    """Pull the last maximal arrow-separated node-reference run out of free text.

    Reasoning transcripts often restate candidate paths before the final
    answer, so the last run wins. Returns None when no run parses cleanly
    (callers keep that as a parse-failure marker).
    """
    if not text:
        return None
    matches = list(_SEQUENCE_RE.finditer(text))
    if not matches:
        return None
    try:
        return parse_path_string(matches[-1].group(0))
    except PathParseError:
        return None


@dataclass(frozen=True)
class PathValidationReport:
    """Report-style result; callers decide severity."""

    missing: tuple[NodeRef, ...]
    bad_edges: tuple[tuple[NodeRef, NodeRef], ...]
    terminal_reached: bool

    @property
    def ok(self) -> bool:
        return not self.missing and not self.bad_edges


def validate_path(
    path: GuidelinePath, graph: GuidelineGraph, strict_edges: bool = False
) -> PathValidationReport:
    """Check node existence and (optionally) edge adjacency against a graph."""
    missing = tuple(ref for ref in path.nodes if ref not in graph)
    bad_edges: list[tuple[NodeRef, NodeRef]] = []
    if strict_edges:
        for parent, child in zip(path.nodes, path.nodes[1:]):
            if parent in graph and child in graph and not graph.is_edge(parent, child):
                bad_edges.append((parent, child))
    last = graph.get(path.final)
    terminal = last is not None and last.kind is NodeKind.RECOMMENDATION
    return PathValidationReport(
        missing=missing, bad_edges=tuple(bad_edges), terminal_reached=terminal
    )


def resolve_terminal_flag(path: GuidelinePath, graph: GuidelineGraph) -> GuidelinePath:
    """Return a copy of the path with terminal_reached set from the graph."""
    last = graph.get(path.final)
    terminal = last is not None and last.kind is NodeKind.RECOMMENDATION
    return replace(path, terminal_reached=terminal)


def sample_random_path(
    graph: GuidelineGraph,
    seed: int | None = None,
    rng: random.Random | None = None,
) -> GuidelinePath:
    """Uniform root choice, then uniform child choice until a recommendation."""
    if rng is None:
        rng = random.Random(seed)
    ref = graph.roots[rng.randrange(len(graph.roots))]
    nodes = [ref]
    node = graph.node(ref)
    while node.kind is not NodeKind.RECOMMENDATION:
        ref = node.children[rng.randrange(len(node.children))]
        nodes.append(ref)
        node = graph.node(ref)
    return GuidelinePath(nodes=tuple(nodes), terminal_reached=True)
