"""Dataset loading, deterministic sampling and answer metrics.

Metrics: COVER-EM (containment exact match), Answer Recall, Entity Recall,
and Disambig-F1 with a pluggable answer extractor. The default Dis-F1 scorer
is a containment/token-F1 proxy and is flagged as such in reports; scores
are indicative, not comparable to extractor-based published numbers.
"""

from __future__ import annotations

import json
import random
import re
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional, Sequence


class SchemaMismatch(Exception):
    def __init__(self, message: str, line_number: int = 0):
        super().__init__(f"line {line_number}: {message}" if line_number else message)
        self.line_number = line_number


class ScorerUnavailable(Exception):
    pass


@dataclass
class QuestionRecord:
    question_id: str
    question: str
    answers: list[str]
    entities: list[str] = field(default_factory=list)
    qa_pairs: list[tuple[str, str]] = field(default_factory=list)


_PUNCT = re.compile(f"[{re.escape(string.punctuation)}]")
_ARTICLE = re.compile(r"^(a|an|the)\s+")


def normalize(text: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace, drop a leading article."""
    text = _PUNCT.sub("", text.lower())
    text = " ".join(text.split())
    return _ARTICLE.sub("", text)


def cover_em(prediction: str, golds: Sequence[str]) -> int:
    pred = normalize(prediction)
    return int(any(normalize(g) and normalize(g) in pred for g in golds))


def answer_recall(prediction: str, gold_answers: Sequence[str]) -> float:
    if not gold_answers:
        raise ValueError("gold_answers must be non-empty")
    pred = normalize(prediction)
    hits = sum(1 for g in gold_answers if normalize(g) and normalize(g) in pred)
    return hits / len(gold_answers)


def entity_recall(prediction: str, gold_entities: Sequence[str]) -> float:
    if not gold_entities:
        raise ValueError("gold_entities must be non-empty")
    return answer_recall(prediction, gold_entities)


def _token_f1(pred_tokens: Sequence[str], gold_tokens: Sequence[str]) -> float:
    if not pred_tokens or not gold_tokens:
        return 0.0
    common: dict[str, int] = {}
    gold_counts: dict[str, int] = {}
    for t in gold_tokens:
        gold_counts[t] = gold_counts.get(t, 0) + 1
    overlap = 0
    pred_counts: dict[str, int] = {}
    for t in pred_tokens:
        pred_counts[t] = pred_counts.get(t, 0) + 1
    for t, c in pred_counts.items():
        overlap += min(c, gold_counts.get(t, 0))
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


AnswerExtractor = Callable[[str, str, str], float]
# (prediction, sub_question, gold_answer) -> score in [0, 1]


def containment_extractor(prediction: str, sub_question: str, gold_answer: str) -> float:
    """Proxy extractor: 1 on containment, else best sliding-window token F1."""
    pred = normalize(prediction)
    gold = normalize(gold_answer)
    if not gold:
        return 0.0
    if gold in pred:
        return 1.0
    pred_tokens = pred.split()
    gold_tokens = gold.split()
    if not pred_tokens:
        return 0.0
    width = len(gold_tokens)
    best = 0.0
    for start in range(max(1, len(pred_tokens) - width + 1)):
        window = pred_tokens[start:start + width]
        best = max(best, _token_f1(window, gold_tokens))
    return best


def disambig_f1(
    prediction: str,
    qa_pairs: Sequence[tuple[str, str]],
    scorer: AnswerExtractor = containment_extractor,
) -> float:
    if not qa_pairs:
        raise ValueError("qa_pairs must be non-empty")
    return sum(scorer(prediction, q, a) for q, a in qa_pairs) / len(qa_pairs)


# ---------------------------------------------------------------------------
# Datasets


def _record_from_unified(obj: dict, lineno: int) -> QuestionRecord:
    try:
        rec = QuestionRecord(
            question_id=str(obj["id"]),
            question=obj["question"],
            answers=list(obj["answers"]),
            entities=list(obj.get("entities", [])),
            qa_pairs=[(p["q"], p["a"]) for p in obj.get("qa_pairs", [])],
        )
    except (KeyError, TypeError) as exc:
        raise SchemaMismatch(f"missing or malformed field ({exc})", lineno) from exc
    if not rec.answers:
        raise SchemaMismatch("record has no gold answers", lineno)
    return rec


def _record_from_hotpotqa(obj: dict, lineno: int) -> QuestionRecord:
    try:
        return QuestionRecord(
            question_id=str(obj.get("_id") or obj["id"]),
            question=obj["question"],
            answers=[obj["answer"]],
        )
    except KeyError as exc:
        raise SchemaMismatch(f"missing field {exc}", lineno) from exc


def _record_from_ambigdoc(obj: dict, lineno: int) -> QuestionRecord:
    try:
        pairs = obj["entity_answers"]  # [[entity, answer], ...]
        return QuestionRecord(
            question_id=str(obj["id"]),
            question=obj["question"],
            answers=[a for _, a in pairs],
            entities=[e for e, _ in pairs],
        )
    except (KeyError, ValueError) as exc:
        raise SchemaMismatch(f"missing or malformed field ({exc})", lineno) from exc


def _record_from_asqa(obj: dict, lineno: int) -> QuestionRecord:
    try:
        qa_pairs = [(p["question"], p["short_answer"]) for p in obj["qa_pairs"]]
        answers = obj.get("answers") or [a for _, a in qa_pairs]
        return QuestionRecord(
            question_id=str(obj["id"]),
            question=obj["question"],
            answers=list(answers),
            qa_pairs=qa_pairs,
        )
    except (KeyError, TypeError) as exc:
        raise SchemaMismatch(f"missing or malformed field ({exc})", lineno) from exc


_ADAPTERS = {
    "unified": _record_from_unified,
    "hotpotqa": _record_from_hotpotqa,
    "musique": _record_from_hotpotqa,  # same {question, answer} shape
    "2wikimqa": _record_from_hotpotqa,
    "ambigdoc": _record_from_ambigdoc,
    "asqa": _record_from_asqa,
}


def load_dataset(path: str | Path, format_id: str = "unified") -> Iterator[QuestionRecord]:
    adapter = _ADAPTERS.get(format_id)
    if adapter is None:
        raise ValueError(f"unknown dataset format {format_id!r}")
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaMismatch(f"invalid JSON ({exc.msg})", lineno) from exc
            yield adapter(obj, lineno)


def sample(records: Sequence[QuestionRecord], n: int, seed: int) -> list[QuestionRecord]:
    """Deterministic n-subset preserving input order."""
    if n > len(records):
        raise ValueError(f"cannot sample {n} from {len(records)} records")
    rng = random.Random(seed)
    chosen = sorted(rng.sample(range(len(records)), n))
    return [records[i] for i in chosen]


# ---------------------------------------------------------------------------
# Reports


@dataclass
class MetricsReport:
    per_question: dict[str, dict[str, float]]
    aggregates: dict[str, float]
    sample_size: int
    seed: Optional[int] = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "per_question": self.per_question,
            "aggregates": self.aggregates,
            "sample_size": self.sample_size,
            "seed": self.seed,
            "notes": self.notes,
        }

    def to_table(self) -> str:
        cols = sorted(self.aggregates)
        header = "  ".join(f"{c:>10}" for c in cols)
        values = "  ".join(f"{self.aggregates[c]:>10.3f}" for c in cols)
        return header + "\n" + values


def score_predictions(
    predictions: dict[str, str],
    records: Iterable[QuestionRecord],
    metrics: Sequence[str] = ("cover_em",),
    dis_scorer: AnswerExtractor = containment_extractor,
) -> MetricsReport:
    per_question: dict[str, dict[str, float]] = {}
    notes: list[str] = []
    for rec in records:
        if rec.question_id not in predictions:
            continue
        pred = predictions[rec.question_id]
        scores: dict[str, float] = {}
        if "cover_em" in metrics:
            scores["cover_em"] = float(cover_em(pred, rec.answers))
        if "ar" in metrics:
            scores["ar"] = answer_recall(pred, rec.answers)
        if "er" in metrics and rec.entities:
            scores["er"] = entity_recall(pred, rec.entities)
        if "dis_f1" in metrics and rec.qa_pairs:
            scores["dis_f1"] = disambig_f1(pred, rec.qa_pairs, dis_scorer)
        per_question[rec.question_id] = scores
    if "dis_f1" in metrics:
        notes.append("dis_f1 scorer: containment/token-F1 proxy")
    if "ar" in metrics or "er" in metrics:
        notes.append("AR/ER: AmbigDocs-compatible (containment)")
    aggregates: dict[str, float] = {}
    for metric in metrics:
        vals = [s[metric] for s in per_question.values() if metric in s]
        if vals:
            aggregates[metric] = sum(vals) / len(vals)
    return MetricsReport(
        per_question=per_question,
        aggregates=aggregates,
        sample_size=len(per_question),
        notes=notes,
    )
