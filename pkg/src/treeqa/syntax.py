"""Syntax tree ingestion, pruning and bottom-up traversal.

Two formalisms are supported: dependency trees read from CoNLL-U and
constituency trees read from Penn-Treebank-style bracketed text. Both are
mapped onto the same span-annotated ``SyntaxTree`` structure so the rest of
the engine never cares which parser produced them.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional


class SyntaxError_(Exception):
    """Base for all parse-ingestion failures."""


class MalformedConllu(SyntaxError_):
    pass


class MultipleRoots(SyntaxError_):
    pass


class CyclicHeads(SyntaxError_):
    pass


class UnbalancedBrackets(SyntaxError_):
    pass


class EmptyConstituent(SyntaxError_):
    pass


DEFAULT_SKIP_LABELS_DEP = frozenset({"punct", "det", "cc", "case", "mark"})
DEFAULT_SKIP_LABELS_CONST = frozenset(
    {"DT", "CC", ".", ",", ":", "``", "''", "-LRB-", "-RRB-", "HYPH", "PUNCT"}
)


@dataclass(frozen=True)
class Token:
    index: int  # 1-based
    surface: str
    upos: str = "_"
    deprel: str = "_"


@dataclass
class SyntaxNode:
    id: str
    formalism: str  # "dependency" | "constituency"
    label: str
    span: tuple[int, ...]  # ascending token indices dominated by this node
    surface: str
    children: list[str] = field(default_factory=list)
    parent: Optional[str] = None
    skipped: bool = False

    @property
    def leftmost(self) -> int:
        return self.span[0]


@dataclass
class SyntaxTree:
    root: str
    nodes: dict[str, SyntaxNode]
    question: str
    tokens: list[Token] = field(default_factory=list)
    formalism: str = "dependency"

    def node(self, node_id: str) -> SyntaxNode:
        return self.nodes[node_id]

    def to_dict(self) -> dict:
        return {
            "root": self.root,
            "question": self.question,
            "formalism": self.formalism,
            "tokens": [
                {"index": t.index, "surface": t.surface, "upos": t.upos, "deprel": t.deprel}
                for t in self.tokens
            ],
            "nodes": {
                nid: {
                    "id": n.id,
                    "formalism": n.formalism,
                    "label": n.label,
                    "span": list(n.span),
                    "surface": n.surface,
                    "children": list(n.children),
                    "parent": n.parent,
                    "skipped": n.skipped,
                }
                for nid, n in self.nodes.items()
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SyntaxTree":
        nodes = {
            nid: SyntaxNode(
                id=nd["id"],
                formalism=nd["formalism"],
                label=nd["label"],
                span=tuple(nd["span"]),
                surface=nd["surface"],
                children=list(nd["children"]),
                parent=nd.get("parent"),
                skipped=nd.get("skipped", False),
            )
            for nid, nd in data["nodes"].items()
        }
        tokens = [
            Token(t["index"], t["surface"], t.get("upos", "_"), t.get("deprel", "_"))
            for t in data.get("tokens", [])
        ]
        return cls(
            root=data["root"],
            nodes=nodes,
            question=data["question"],
            tokens=tokens,
            formalism=data.get("formalism", "dependency"),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "SyntaxTree":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class PrunePolicy:
    min_phrase_tokens: int = 3
    skip_labels: frozenset[str] = DEFAULT_SKIP_LABELS_DEP

    def __post_init__(self):
        if self.min_phrase_tokens < 1:
            raise ValueError("min_phrase_tokens must be >= 1")

    @classmethod
    def for_formalism(cls, formalism: str, min_phrase_tokens: int = 3) -> "PrunePolicy":
        labels = (
            DEFAULT_SKIP_LABELS_DEP if formalism == "dependency" else DEFAULT_SKIP_LABELS_CONST
        )
        return cls(min_phrase_tokens=min_phrase_tokens, skip_labels=labels)


def _surface(tokens: list[Token], span: Iterable[int]) -> str:
    # Tokens joined in ascending index order; no detokenization heuristics.
    by_index = {t.index: t.surface for t in tokens}
    return " ".join(by_index[i] for i in sorted(span))


def parse_conllu(doc: str) -> SyntaxTree:
    """Build a dependency SyntaxTree from a single CoNLL-U sentence block.

    Multiword-token ranges ("3-4") and empty nodes ("3.1") are skipped;
    enhanced-dependency columns are ignored.
    """
    tokens: list[Token] = []
    heads: dict[int, int] = {}
    seen_ids: set[int] = set()
    for lineno, line in enumerate(doc.splitlines(), start=1):
        line = line.strip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise MalformedConllu(f"line {lineno}: expected 10 columns, got {len(cols)}")
        if "-" in cols[0] or "." in cols[0]:
            continue  # multiword range or empty node
        try:
            idx = int(cols[0])
            head = int(cols[6])
        except ValueError as exc:
            raise MalformedConllu(f"line {lineno}: non-integer ID or HEAD") from exc
        if idx in seen_ids:
            raise MalformedConllu(f"line {lineno}: duplicate token id {idx}")
        seen_ids.add(idx)
        if not cols[1]:
            raise MalformedConllu(f"line {lineno}: empty FORM")
        tokens.append(Token(index=idx, surface=cols[1], upos=cols[3], deprel=cols[7]))
        heads[idx] = head

    if not tokens:
        raise MalformedConllu("no token rows found")
    expected = list(range(1, len(tokens) + 1))
    if sorted(seen_ids) != expected:
        raise MalformedConllu("token ids are not contiguous 1..T")

    roots = [i for i, h in heads.items() if h == 0]
    if len(roots) > 1:
        raise MultipleRoots(f"tokens {roots} all have HEAD=0")
    if not roots:
        raise CyclicHeads("no HEAD=0 token")
    for i, h in heads.items():
        if h != 0 and h not in heads:
            raise MalformedConllu(f"token {i} points at missing head {h}")

    # Subtree closure per token; cycle detection via visited-chain walk.
    children_of: dict[int, list[int]] = {i: [] for i in heads}
    for i, h in heads.items():
        if h != 0:
            children_of[h].append(i)
    for i in heads:
        seen: set[int] = set()
        cur = i
        while cur != 0:
            if cur in seen:
                raise CyclicHeads(f"cycle through token {cur}")
            seen.add(cur)
            cur = heads[cur]

    def closure(i: int) -> set[int]:
        out = {i}
        for c in children_of[i]:
            out |= closure(c)
        return out

    question = " ".join(t.surface for t in tokens)
    nodes: dict[str, SyntaxNode] = {}
    tok_by_index = {t.index: t for t in tokens}
    for i in heads:
        span = tuple(sorted(closure(i)))
        nodes[f"t{i}"] = SyntaxNode(
            id=f"t{i}",
            formalism="dependency",
            label=tok_by_index[i].deprel,
            span=span,
            surface=_surface(tokens, span),
            children=[f"t{c}" for c in sorted(children_of[i])],
            parent=None if heads[i] == 0 else f"t{heads[i]}",
        )
    return SyntaxTree(
        root=f"t{roots[0]}",
        nodes=nodes,
        question=question,
        tokens=tokens,
        formalism="dependency",
    )


_PTB_TOKEN = re.compile(r"\(|\)|[^\s()]+")


def parse_ptb(doc: str) -> SyntaxTree:
    """Build a constituency SyntaxTree from bracketed `(TAG ...)` text."""
    pieces = _PTB_TOKEN.findall(doc)
    if not pieces:
        raise UnbalancedBrackets("empty input")

    tokens: list[Token] = []
    nodes: dict[str, SyntaxNode] = {}
    counter = [0]

    def fresh_id() -> str:
        counter[0] += 1
        return f"c{counter[0]}"

    pos = [0]

    def parse_node() -> str:
        if pos[0] >= len(pieces) or pieces[pos[0]] != "(":
            raise UnbalancedBrackets("expected '('")
        pos[0] += 1
        # A missing tag is tolerated while scanning (PTB roots are sometimes
        # unlabeled); a tagless, childless constituent is rejected below.
        tag = ""
        if pos[0] < len(pieces) and pieces[pos[0]] not in "()":
            tag = pieces[pos[0]]
            pos[0] += 1
        child_ids: list[str] = []
        leaf_text: Optional[str] = None
        while pos[0] < len(pieces) and pieces[pos[0]] != ")":
            if pieces[pos[0]] == "(":
                child_ids.append(parse_node())
            else:
                leaf_text = pieces[pos[0]]
                pos[0] += 1
        if pos[0] >= len(pieces):
            raise UnbalancedBrackets("missing ')'")
        pos[0] += 1  # consume ')'

        nid = fresh_id()
        if not tag and not child_ids:
            raise EmptyConstituent("constituent without a tag or children")
        if leaf_text is not None and not child_ids:
            idx = len(tokens) + 1
            tokens.append(Token(index=idx, surface=leaf_text, upos=tag))
            span: tuple[int, ...] = (idx,)
        elif child_ids:
            span = tuple(sorted(i for c in child_ids for i in nodes[c].span))
        else:
            raise EmptyConstituent(f"constituent {tag} has no children")
        nodes[nid] = SyntaxNode(
            id=nid,
            formalism="constituency",
            label=tag,
            span=span,
            surface="",  # filled below once all tokens exist
            children=child_ids,
        )
        for c in child_ids:
            nodes[c].parent = nid
        return nid

    root = parse_node()
    if pos[0] != len(pieces):
        raise UnbalancedBrackets("trailing content after root constituent")
    for n in nodes.values():
        n.surface = _surface(tokens, n.span)
    question = " ".join(t.surface for t in tokens)
    return SyntaxTree(
        root=root, nodes=nodes, question=question, tokens=tokens, formalism="constituency"
    )


def prune(tree: SyntaxTree, policy: PrunePolicy) -> SyntaxTree:
    """Return a copy with non-informative / too-short nodes flagged skipped.

    Skipped nodes stay in the tree so span bookkeeping is untouched; the
    traversal simply never visits them. The root is never skipped (its
    synthesis is the final-answer stage's job, not a per-node pass).
    """
    nodes = {nid: replace(n, children=list(n.children)) for nid, n in tree.nodes.items()}
    for nid, n in nodes.items():
        if nid == tree.root:
            continue
        n.skipped = n.label in policy.skip_labels or len(n.span) < policy.min_phrase_tokens
    return SyntaxTree(
        root=tree.root,
        nodes=nodes,
        question=tree.question,
        tokens=list(tree.tokens),
        formalism=tree.formalism,
    )


def effective_children(tree: SyntaxTree, node_id: str) -> list[str]:
    """Unskipped children after re-attaching across skipped intermediates."""
    out: list[str] = []
    for cid in tree.node(node_id).children:
        child = tree.node(cid)
        if child.skipped:
            out.extend(effective_children(tree, cid))
        else:
            out.append(cid)
    out.sort(key=lambda cid: tree.node(cid).leftmost)
    return out


def traversal_order(tree: SyntaxTree) -> list[str]:
    """Bottom-up order over unskipped non-root nodes.

    Every node appears after all its unskipped descendants; siblings are
    visited by ascending leftmost token index.
    """
    order: list[str] = []

    def visit(nid: str) -> None:
        for cid in effective_children(tree, nid):
            visit(cid)
        if nid != tree.root:
            order.append(nid)

    visit(tree.root)
    return order
