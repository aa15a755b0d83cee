"""End-to-end orchestration: per-node query generation, retrieval and
subcomponent answering over the syntax tree, then final synthesis.

Also implements the LLM-free Tree-Retrieval variant and the structural
ablations (no-qg, no-sag, no-ir, ir-only, qg-only, cot-only).
"""

from __future__ import annotations

import json
import re
import string
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

from . import index as idx
from . import llm
from . import syntax

TRACE_SCHEMA = 1

ABLATION_MODES = ("no-qg", "no-sag", "no-ir", "ir-only", "qg-only", "cot-only")

# Prompt rendering budgets; keeps SAG/FAG prompts inside backbone context
# limits regardless of corpus paragraph size.
DOC_CHAR_BUDGET = 1200
PROMPT_CHAR_CEILING = 60_000


@dataclass
class PipelineConfig:
    formalism: str = "dependency"  # "dependency" | "constituency"
    min_phrase_tokens: int = 3
    skip_labels: Optional[frozenset[str]] = None
    candidates_per_node: int = 5
    selected_per_node: int = 3
    docs_per_query: int = 15
    merge_cap: int = idx.DEFAULT_MERGE_CAP
    tree_retrieval_per_node_k: int = 10
    tree_retrieval_rerank_m: int = 15
    leaf_mode: str = "query"  # "query" | "evidence"
    qa_style: str = "multihop"  # "multihop" | "ambiguous"

    def __post_init__(self):
        if self.selected_per_node > self.candidates_per_node:
            raise ValueError("selected_per_node must be <= candidates_per_node")
        if self.docs_per_query < 1:
            raise ValueError("docs_per_query must be >= 1")

    def prune_policy(self) -> syntax.PrunePolicy:
        if self.skip_labels is not None:
            return syntax.PrunePolicy(self.min_phrase_tokens, frozenset(self.skip_labels))
        return syntax.PrunePolicy.for_formalism(self.formalism, self.min_phrase_tokens)

    def qg_template(self) -> str:
        return "qg_multihop" if self.qa_style == "multihop" else "qg_ambiguous"

    def fag_template(self) -> str:
        return "fag_multihop" if self.qa_style == "multihop" else "fag_ambiguous"


@dataclass
class QuerySet:
    node_id: str
    candidates: list[str]
    selected: list[str]
    fallback: bool = False  # model output unparseable, surface used instead


@dataclass
class EvidenceSet:
    node_id: str
    text: str
    supporting_doc_ids: list[str] = field(default_factory=list)
    source_queries: list[str] = field(default_factory=list)


@dataclass
class NodeRecord:
    node_id: str
    surface: str
    queries: list[str] = field(default_factory=list)
    candidate_queries: list[str] = field(default_factory=list)
    retrieved: list[dict] = field(default_factory=list)  # [{doc_id, score}]
    reranked: list[dict] = field(default_factory=list)
    evidence: str = ""
    search_calls: int = 0
    flags: list[str] = field(default_factory=list)
    error: str = ""


@dataclass
class RunTrace:
    question_id: str
    question: str
    method: str
    node_records: list[NodeRecord] = field(default_factory=list)
    final_answer: str = ""
    format_violation: bool = False
    usage: list[dict] = field(default_factory=list)
    search_calls: int = 0
    llm_calls: int = 0
    flags: list[str] = field(default_factory=list)
    trace_schema: int = TRACE_SCHEMA

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "RunTrace":
        data = json.loads(line)
        records = [NodeRecord(**r) for r in data.pop("node_records", [])]
        return cls(node_records=records, **data)


# ---------------------------------------------------------------------------
# Query generation and selection

_RESPONSE_LINE = re.compile(r"response\s*:\s*(.*)", re.IGNORECASE | re.DOTALL)
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)
_FUNCTION_WORDS = frozenset(
    "a an the of in on for to and or is are was were what who which where when how".split()
)


def _normalize_query(text: str) -> str:
    return " ".join(text.lower().translate(_PUNCT_TABLE).split())


def _content_tokens(text: str) -> set[str]:
    return {t for t in _normalize_query(text).split() if t not in _FUNCTION_WORDS}


def parse_query_response(text: str) -> list[str]:
    """Parse the "response: q1; q2; ..." contract; [] if no marker found."""
    match = _RESPONSE_LINE.search(text)
    if not match:
        return []
    parts = [q.strip() for q in match.group(1).split(";")]
    return [q for q in parts if q]


def select_queries(candidates: Sequence[str], limit: int = 3) -> list[str]:
    """Greedy coverage-maximizing selection, deduped after normalization."""
    deduped: list[str] = []
    seen: set[str] = set()
    for cand in candidates:
        norm = _normalize_query(cand)
        if norm and norm not in seen:
            seen.add(norm)
            deduped.append(cand)
    selected: list[str] = []
    covered: set[str] = set()
    remaining = list(deduped)
    while remaining and len(selected) < limit:
        # max() keeps the earliest of tied candidates: generation order wins.
        best = max(remaining, key=lambda c: len(_content_tokens(c) - covered))
        selected.append(best)
        covered |= _content_tokens(best)
        remaining.remove(best)
    return selected


def format_child_evidence(tree: syntax.SyntaxTree, evidence: Sequence[EvidenceSet]) -> str:
    if not evidence:
        return ""
    lines = []
    for ev in evidence:
        surface = tree.node(ev.node_id).surface
        lines.append(f"- [{surface}]: {ev.text}")
    return "\n" + "\n".join(lines)


def format_docs(paragraphs: Sequence[idx.Paragraph]) -> tuple[str, bool]:
    """Render "[doc_id] title: text" blocks under the prompt character budget.

    Returns (block, truncated).
    """
    blocks = []
    total = 0
    truncated = False
    for p in paragraphs:
        text = p.text
        if len(text) > DOC_CHAR_BUDGET:
            text = text[:DOC_CHAR_BUDGET]
            truncated = True
        block = f"[{p.doc_id}] {p.title}: {text}"
        if total + len(block) > PROMPT_CHAR_CEILING:
            truncated = True
            break
        blocks.append(block)
        total += len(block)
    return "\n".join(blocks), truncated


# ---------------------------------------------------------------------------
# Per-node operations


def generate_queries(
    question: str,
    tree: syntax.SyntaxTree,
    node: syntax.SyntaxNode,
    child_evidence: Sequence[EvidenceSet],
    gateway: llm.Gateway,
    config: PipelineConfig,
) -> QuerySet:
    prompt = llm.render_prompt(
        config.qg_template(),
        {
            "question": question,
            "phrase": node.surface,
            "context": format_child_evidence(tree, child_evidence),
        },
    )
    completion = gateway.complete(
        prompt, stage="qg", fallback_key=f"{config.qg_template()}::{node.surface}"
    )
    candidates = parse_query_response(completion.text)[: config.candidates_per_node]
    if not candidates:
        # EmptyQueryList fallback: the node surface stands in as the query.
        return QuerySet(node_id=node.id, candidates=[node.surface],
                        selected=[node.surface], fallback=True)
    return QuerySet(
        node_id=node.id,
        candidates=candidates,
        selected=select_queries(candidates, config.selected_per_node),
    )


def answer_subcomponent(
    queries: QuerySet,
    docs: Sequence[idx.Paragraph],
    gateway: llm.Gateway,
    node_surface: str,
) -> tuple[EvidenceSet, bool]:
    """SAG: synthesize the retrieved documents into concise per-node evidence."""
    doc_block, truncated = format_docs(docs)
    prompt = llm.render_prompt(
        "sag",
        {"question": "; ".join(queries.selected), "context": doc_block},
    )
    completion = gateway.complete(prompt, stage="sag", fallback_key=f"sag::{node_surface}")
    evidence = EvidenceSet(
        node_id=queries.node_id,
        text=completion.text,
        supporting_doc_ids=[p.doc_id for p in docs],
        source_queries=list(queries.selected),
    )
    return evidence, truncated


def synthesize_answer(
    question: str,
    tree: syntax.SyntaxTree,
    evidence: Sequence[EvidenceSet],
    gateway: llm.Gateway,
    config: PipelineConfig,
    fallback_key: Optional[str] = None,
) -> tuple[str, bool]:
    prompt = llm.render_prompt(
        config.fag_template(),
        {"question": question, "documents": format_child_evidence(tree, evidence)},
    )
    key = fallback_key or f"{config.fag_template()}::{question}"
    completion = gateway.complete(prompt, stage="fag", fallback_key=key)
    return llm.parse_final(completion.text)


# ---------------------------------------------------------------------------
# Full runs


def _prepare(tree: syntax.SyntaxTree, config: PipelineConfig):
    pruned = syntax.prune(tree, config.prune_policy())
    return pruned, syntax.traversal_order(pruned)


def _paragraphs(index: idx.Index, hits: Sequence[idx.Hit]) -> list[idx.Paragraph]:
    return [index.paragraph(h.doc_id) for h in hits]


def _usage_dicts(gateway: llm.Gateway) -> list[dict]:
    return [
        {
            "stage": e.stage,
            "model": e.model,
            "prompt_tokens": e.completion.prompt_tokens,
            "completion_tokens": e.completion.completion_tokens,
            "estimated": e.completion.estimated_usage,
        }
        for e in gateway.ledger
    ]


def run_treerare(
    question_id: str,
    question: str,
    config: PipelineConfig,
    index: idx.Index,
    gateway: llm.Gateway,
    tree: syntax.SyntaxTree,
    method: Optional[str] = None,
) -> RunTrace:
    pruned, order = _prepare(tree, config)
    method = method or (
        "treerare-dt" if config.formalism == "dependency" else "treerare-ct"
    )
    trace = RunTrace(question_id=question_id, question=question, method=method)
    evidence_by_node: dict[str, EvidenceSet] = {}

    for nid in order:
        node = pruned.node(nid)
        record = NodeRecord(node_id=nid, surface=node.surface)
        try:
            child_ev = [
                evidence_by_node[cid]
                for cid in syntax.effective_children(pruned, nid)
                if cid in evidence_by_node
            ]
            if config.leaf_mode == "evidence" and not syntax.effective_children(pruned, nid):
                # Leaf shortcut: the phrase itself is the initial evidence.
                evidence = EvidenceSet(node_id=nid, text=node.surface)
                record.evidence = evidence.text
                evidence_by_node[nid] = evidence
                trace.node_records.append(record)
                continue
            qs = generate_queries(question, pruned, node, child_ev, gateway, config)
            record.candidate_queries = list(qs.candidates)
            record.queries = list(qs.selected)
            if qs.fallback:
                record.flags.append("query_fallback")
            results = []
            for q in qs.selected:
                try:
                    results.append(idx.search(index, q, config.docs_per_query))
                    record.search_calls += 1
                except idx.EmptyQuery:
                    record.flags.append("empty_query")
            merged = idx.merge_results(results, cap=config.merge_cap)
            record.retrieved = [{"doc_id": h.doc_id, "score": h.score} for h in merged]
            evidence, truncated = answer_subcomponent(
                qs, _paragraphs(index, merged), gateway, node.surface
            )
            if truncated:
                record.flags.append("doc_truncation")
            record.evidence = evidence.text
            evidence_by_node[nid] = evidence
        except (llm.GatewayError, idx.IndexError_) as exc:
            # Skip-and-continue: final synthesis reconciles partial evidence.
            record.error = f"{type(exc).__name__}: {exc}"
        trace.node_records.append(record)
        trace.search_calls += record.search_calls

    ordered_evidence = [evidence_by_node[nid] for nid in order if nid in evidence_by_node]
    answer, violation = synthesize_answer(
        question, pruned, ordered_evidence, gateway, config,
        fallback_key=f"{config.fag_template()}::{question_id}",
    )
    trace.final_answer = answer
    trace.format_violation = violation
    trace.usage = _usage_dicts(gateway)
    trace.llm_calls = len(gateway.ledger)
    return trace


def _subtree_nodes(tree: syntax.SyntaxTree, nid: str) -> list[str]:
    out = [nid]
    for cid in syntax.effective_children(tree, nid):
        out.extend(_subtree_nodes(tree, cid))
    return out


def run_tree_retrieval(
    question_id: str,
    question: str,
    config: PipelineConfig,
    index: idx.Index,
    scorer: idx.RelevanceScorer,
    gateway: llm.Gateway,
    tree: syntax.SyntaxTree,
) -> RunTrace:
    """LLM-free retrieval variant: sub-phrase BM25 + reranking per subtree.

    Each node (root included) retrieves with its surface form; hits pool
    across the subtree rooted at each node and are reranked to the top-m.
    Only the root's reranked pool feeds the single final QA completion.
    """
    pruned, order = _prepare(tree, config)
    method = (
        "tree-retrieval-dt" if config.formalism == "dependency" else "tree-retrieval-ct"
    )
    trace = RunTrace(question_id=question_id, question=question, method=method)

    per_node_hits: dict[str, list[idx.Hit]] = {}
    active = order + [pruned.root]
    for nid in active:
        node = pruned.node(nid)
        try:
            res = idx.search(index, node.surface, config.tree_retrieval_per_node_k)
            per_node_hits[nid] = list(res.hits)
            trace.search_calls += 1
        except idx.EmptyQuery:
            per_node_hits[nid] = []

    root_record = None
    for nid in active:
        node = pruned.node(nid)
        pool: dict[str, idx.Hit] = {}
        for member in _subtree_nodes(pruned, nid):
            for hit in per_node_hits.get(member, []):
                # Dedup across sibling nodes, keeping the best BM25 score.
                if hit.doc_id not in pool or hit.score > pool[hit.doc_id].score:
                    pool[hit.doc_id] = hit
        pooled = sorted(pool.values(), key=lambda h: (-h.score, h.doc_id))
        reranked = idx.rerank(
            pooled, node.surface, scorer, config.tree_retrieval_rerank_m, index
        )
        record = NodeRecord(
            node_id=nid,
            surface=node.surface,
            queries=[node.surface],
            retrieved=[{"doc_id": h.doc_id, "score": h.score} for h in pooled],
            reranked=[{"doc_id": h.doc_id, "score": h.score} for h in reranked],
            search_calls=1 if per_node_hits.get(nid) else 0,
        )
        if nid == pruned.root:
            root_record = record
        trace.node_records.append(record)

    assert root_record is not None
    root_docs = [index.paragraph(r["doc_id"]) for r in root_record.reranked]
    doc_block, _ = format_docs(root_docs)
    prompt = llm.render_prompt(
        "fag_multihop", {"question": question, "documents": doc_block}
    )
    completion = gateway.complete(
        prompt, stage="qa", fallback_key=f"fag_multihop::{question_id}"
    )
    answer, violation = llm.parse_final(completion.text)
    trace.final_answer = answer
    trace.format_violation = violation
    trace.usage = _usage_dicts(gateway)
    trace.llm_calls = len(gateway.ledger)
    return trace


def run_ablation(
    question_id: str,
    question: str,
    mode: str,
    config: PipelineConfig,
    index: idx.Index,
    gateway: llm.Gateway,
    tree: Optional[syntax.SyntaxTree] = None,
) -> RunTrace:
    if mode not in ABLATION_MODES:
        raise ValueError(f"unknown ablation mode {mode!r}")
    trace = RunTrace(question_id=question_id, question=question, method=f"ablation:{mode}")

    if mode == "cot-only":
        # Single chain-of-thought completion; neither syntax nor index touched.
        prompt = llm.render_prompt("fag_multihop", {"question": question, "documents": ""})
        completion = gateway.complete(
            prompt, stage="qa", fallback_key=f"fag_multihop::{question_id}"
        )
        trace.final_answer, trace.format_violation = llm.parse_final(completion.text)
        trace.usage = _usage_dicts(gateway)
        trace.llm_calls = len(gateway.ledger)
        return trace

    if mode == "ir-only":
        res = idx.search(index, question, config.docs_per_query)
        trace.search_calls = 1
        docs = _paragraphs(index, res.hits)
        doc_block, _ = format_docs(docs)
        prompt = llm.render_prompt(
            "fag_multihop", {"question": question, "documents": doc_block}
        )
        completion = gateway.complete(
            prompt, stage="qa", fallback_key=f"fag_multihop::{question_id}"
        )
        trace.final_answer, trace.format_violation = llm.parse_final(completion.text)
        trace.node_records.append(
            NodeRecord(
                node_id="__question__",
                surface=question,
                queries=[question],
                retrieved=[{"doc_id": h.doc_id, "score": h.score} for h in res.hits],
                search_calls=1,
            )
        )
        trace.usage = _usage_dicts(gateway)
        trace.llm_calls = len(gateway.ledger)
        return trace

    assert tree is not None, f"ablation {mode} requires a parsed tree"
    pruned, order = _prepare(tree, config)
    evidence_by_node: dict[str, EvidenceSet] = {}

    for nid in order:
        node = pruned.node(nid)
        record = NodeRecord(node_id=nid, surface=node.surface)
        child_ev = [
            evidence_by_node[cid]
            for cid in syntax.effective_children(pruned, nid)
            if cid in evidence_by_node
        ]
        if mode == "no-qg":
            qs = QuerySet(node_id=nid, candidates=[node.surface], selected=[node.surface])
        elif mode == "qg-only":
            # QG without child-evidence conditioning; queries answered directly.
            qs = generate_queries(question, pruned, node, [], gateway, config)
        else:  # no-sag, no-ir run the full QG pass
            qs = generate_queries(question, pruned, node, child_ev, gateway, config)
        record.candidate_queries = list(qs.candidates)
        record.queries = list(qs.selected)

        docs: list[idx.Paragraph] = []
        if mode in ("no-qg", "no-sag"):
            results = []
            for q in qs.selected:
                try:
                    results.append(idx.search(index, q, config.docs_per_query))
                    record.search_calls += 1
                except idx.EmptyQuery:
                    record.flags.append("empty_query")
            merged = idx.merge_results(results, cap=config.merge_cap)
            record.retrieved = [{"doc_id": h.doc_id, "score": h.score} for h in merged]
            docs = _paragraphs(index, merged)

        if mode == "no-sag":
            # Raw documents bubble upward uninterpreted.
            text = "\n".join(f"[{p.doc_id}] {p.title}: {p.text}" for p in docs)
            evidence = EvidenceSet(
                node_id=nid, text=text,
                supporting_doc_ids=[p.doc_id for p in docs],
                source_queries=list(qs.selected),
            )
        else:
            evidence, truncated = answer_subcomponent(qs, docs, gateway, node.surface)
            if truncated:
                record.flags.append("doc_truncation")
        record.evidence = evidence.text
        evidence_by_node[nid] = evidence
        trace.node_records.append(record)
        trace.search_calls += record.search_calls

    ordered_evidence = [evidence_by_node[nid] for nid in order if nid in evidence_by_node]
    answer, violation = synthesize_answer(
        question, pruned, ordered_evidence, gateway, config,
        fallback_key=f"{config.fag_template()}::{question_id}",
    )
    trace.final_answer = answer
    trace.format_violation = violation
    trace.usage = _usage_dicts(gateway)
    trace.llm_calls = len(gateway.ledger)
    return trace
