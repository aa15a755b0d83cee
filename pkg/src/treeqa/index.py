"""Immutable BM25 inverted index over a paragraph corpus.

Tokenization is fixed ("lower-alnum-v1"): lowercase, split on runs of
non-alphanumeric characters, drop empties. Title tokens are indexed together
with body tokens. No stopword removal: sub-phrase queries are short and
stopword stripping risks emptying them.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import requests

DEFAULT_K1 = 0.9
DEFAULT_B = 0.4
TOKENIZER_ID = "lower-alnum-v1"
INDEX_FORMAT_VERSION = 1

# D_n cap: 3 queries x 15 docs, post-dedup; bounds downstream prompt size.
DEFAULT_MERGE_CAP = 45

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


class IndexError_(Exception):
    pass


class DuplicateDocId(IndexError_):
    pass


class EmptyCorpus(IndexError_):
    pass


class EmptyQuery(IndexError_):
    pass


class ScorerUnavailable(Exception):
    pass


def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


@dataclass(frozen=True)
class Paragraph:
    doc_id: str
    title: str
    text: str


@dataclass(frozen=True)
class Hit:
    doc_id: str
    score: float


@dataclass(frozen=True)
class RetrievalResult:
    query: str
    hits: tuple[Hit, ...]


@dataclass
class Index:
    postings: dict[str, list[tuple[str, int]]]  # term -> [(doc_id, tf)], sorted by doc_id
    doc_lengths: dict[str, int]
    avg_doc_length: float
    doc_count: int
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B
    docs: dict[str, Paragraph] = field(default_factory=dict)

    def idf(self, term: str) -> float:
        df = len(self.postings.get(term, ()))
        return math.log(1.0 + (self.doc_count - df + 0.5) / (df + 0.5))

    def paragraph(self, doc_id: str) -> Paragraph:
        return self.docs[doc_id]


def build_index(
    corpus: Iterable[Paragraph], k1: float = DEFAULT_K1, b: float = DEFAULT_B
) -> Index:
    postings: dict[str, dict[str, int]] = {}
    doc_lengths: dict[str, int] = {}
    docs: dict[str, Paragraph] = {}
    for para in corpus:
        if para.doc_id in doc_lengths:
            raise DuplicateDocId(para.doc_id)
        terms = tokenize(para.title) + tokenize(para.text)
        doc_lengths[para.doc_id] = len(terms)
        docs[para.doc_id] = para
        for term in terms:
            postings.setdefault(term, {}).setdefault(para.doc_id, 0)
            postings[term][para.doc_id] += 1
    if not doc_lengths:
        raise EmptyCorpus("corpus stream produced no paragraphs")
    n = len(doc_lengths)
    return Index(
        postings={t: sorted(d.items()) for t, d in postings.items()},
        doc_lengths=doc_lengths,
        avg_doc_length=sum(doc_lengths.values()) / n,
        doc_count=n,
        k1=k1,
        b=b,
        docs=docs,
    )


def search(index: Index, query: str, k: int) -> RetrievalResult:
    """Top-k BM25 search, deterministic: ties broken by ascending doc_id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    terms = tokenize(query)
    if not terms:
        raise EmptyQuery(query)
    scores: dict[str, float] = {}
    for term in terms:
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = index.idf(term)
        for doc_id, tf in plist:
            dl = index.doc_lengths[doc_id]
            denom = tf + index.k1 * (1 - index.b + index.b * dl / index.avg_doc_length)
            scores[doc_id] = scores.get(doc_id, 0.0) + idf * tf * (index.k1 + 1) / denom
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    if len(ranked) < k:
        # Zero-score documents rank below all matches, in doc_id order.
        rest = sorted(d for d in index.doc_lengths if d not in scores)
        ranked.extend((d, 0.0) for d in rest)
    hits = tuple(Hit(doc_id=d, score=s) for d, s in ranked[:k])
    return RetrievalResult(query=query, hits=hits)


def merge_results(
    results: Sequence[RetrievalResult], cap: int = DEFAULT_MERGE_CAP
) -> list[Hit]:
    """Union per-query hit lists by doc_id, keeping each doc's maximum score."""
    best: dict[str, float] = {}
    for res in results:
        for hit in res.hits:
            if hit.doc_id not in best or hit.score > best[hit.doc_id]:
                best[hit.doc_id] = hit.score
    merged = [Hit(d, s) for d, s in sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))]
    return merged[:cap]


RelevanceScorer = Callable[[str, Sequence[Paragraph]], Sequence[float]]


def rerank(
    candidates: Sequence[Hit],
    anchor: str,
    scorer: RelevanceScorer,
    m: int,
    index: Index,
) -> list[Hit]:
    """Re-sort candidates by an external relevance scorer, keep top-m.

    Returned Hit scores are the scorer's scores; the caller keeps the
    original BM25 scores in its trace.
    """
    if not candidates:
        return []
    passages = [index.paragraph(h.doc_id) for h in candidates]
    scores = scorer(anchor, passages)
    if len(scores) != len(candidates):
        raise ScorerUnavailable(
            f"scorer returned {len(scores)} scores for {len(candidates)} passages"
        )
    for s in scores:
        if not math.isfinite(s):
            raise ScorerUnavailable(f"non-finite score {s!r}")
    rescored = [Hit(h.doc_id, float(s)) for h, s in zip(candidates, scores)]
    rescored.sort(key=lambda h: (-h.score, h.doc_id))
    return rescored[:m]


def passthrough_scorer(index: Index) -> RelevanceScorer:
    """Scorer that reproduces BM25 rank: scores each passage by its anchor score."""

    def score(anchor: str, passages: Sequence[Paragraph]) -> list[float]:
        try:
            res = search(index, anchor, k=index.doc_count)
        except EmptyQuery:
            return [0.0] * len(passages)
        by_id = {h.doc_id: h.score for h in res.hits}
        return [by_id.get(p.doc_id, 0.0) for p in passages]

    return score


class HttpScorer:
    """Cross-encoder-style reranking service client.

    Wire contract: POST {anchor, passages:[{id,title,text}]} -> {scores:[..]}.
    """

    def __init__(self, url: str, timeout: float = 30.0):
        self.url = url
        self.timeout = timeout

    def __call__(self, anchor: str, passages: Sequence[Paragraph]) -> list[float]:
        payload = {
            "anchor": anchor,
            "passages": [
                {"id": p.doc_id, "title": p.title, "text": p.text} for p in passages
            ],
        }
        try:
            resp = requests.post(self.url, json=payload, timeout=self.timeout)
            resp.raise_for_status()
            scores = resp.json()["scores"]
        except (requests.RequestException, KeyError, ValueError) as exc:
            raise ScorerUnavailable(str(exc)) from exc
        return [float(s) for s in scores]


# ---------------------------------------------------------------------------
# Persistence


def read_corpus(path: str | Path) -> Iterable[Paragraph]:
    """Stream a JSON-lines corpus: {"id", "title", "text"} per line."""
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            yield Paragraph(doc_id=obj["id"], title=obj.get("title", ""), text=obj["text"])


def save_index(index: Index, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": INDEX_FORMAT_VERSION,
        "doc_count": index.doc_count,
        "avg_doc_length": index.avg_doc_length,
        "k1": index.k1,
        "b": index.b,
        "tokenizer": TOKENIZER_ID,
    }
    (out / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2))
    (out / "postings.json").write_text(
        json.dumps({t: p for t, p in sorted(index.postings.items())}, sort_keys=True)
    )
    (out / "doc_lengths.json").write_text(json.dumps(index.doc_lengths, sort_keys=True))
    with open(out / "docs.jsonl", "w", encoding="utf-8") as fh:
        for doc_id in sorted(index.docs):
            p = index.docs[doc_id]
            fh.write(json.dumps({"id": p.doc_id, "title": p.title, "text": p.text}) + "\n")


def load_index(in_dir: str | Path) -> Index:
    src = Path(in_dir)
    meta = json.loads((src / "meta.json").read_text())
    postings = {
        t: [(d, tf) for d, tf in plist]
        for t, plist in json.loads((src / "postings.json").read_text()).items()
    }
    doc_lengths = json.loads((src / "doc_lengths.json").read_text())
    docs = {p.doc_id: p for p in read_corpus(src / "docs.jsonl")}
    return Index(
        postings=postings,
        doc_lengths=doc_lengths,
        avg_doc_length=meta["avg_doc_length"],
        doc_count=meta["doc_count"],
        k1=meta["k1"],
        b=meta["b"],
        docs=docs,
    )
