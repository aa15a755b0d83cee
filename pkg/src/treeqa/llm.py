"""Provider-agnostic chat-completion gateway.

Covers prompt templating, a live HTTP provider speaking the common
chat-completion JSON schema, a deterministic transcript-replay provider for
offline runs, final-answer extraction, and token/cost accounting.
"""

from __future__ import annotations

import hashlib
import json
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import requests


class GatewayError(Exception):
    pass


class MissingBinding(GatewayError):
    pass


class ProviderError(GatewayError):
    pass


class RetriesExhausted(GatewayError):
    pass


class TranscriptMiss(GatewayError):
    pass


class UnpricedModel(GatewayError):
    pass


# ---------------------------------------------------------------------------
# Prompt templates

QG_MULTIHOP = """\
You are resolving the phrase "{{phrase}}" inside the question:
{{question}}

Here is what we currently know about its parts:
Documents:{{context}}

Generate up to five simple search queries that would resolve the remaining \
uncertainty about this phrase, grounded in the question and the evidence \
above. Queries should target missing facts, bridge entities, or unclear \
relations introduced by this phrase.
Strictly FOLLOW the format: response: question1; question2;...."""

QG_AMBIGUOUS = """\
You're a disambiguation expert analyzing "{{phrase}}" in:
{{question}}
Instruction:
1. Analyze the question by considering these potential ambiguities:
   - Temporal: Check for unclear time references, periods, or temporal scope
   - Entity: Identify names, references, or terms that could refer to multiple entities
   - Semantic: Look for words with multiple meanings (polysemy/homonymy)
   - Scope: Consider possible boundaries and levels of detail
   - Intent: Examine possible purposes and expected answer types
   - Cultural: Consider cultural-dependent interpretations
   - Quantitative: Check for unclear measurements or numerical references
   - Linguistic: Analyze syntax and referential clarity
   - Categorical: Consider possible classification schemes
   - Contextual: Examine required background knowledge and relationships
2. Analyze the question word by word. Return disambiguated question and its \
interperatation for each different meaning

Here is what we currently know
Documents:{{context}}

pick top 5 questions that are best in disambiguating the question. (covers \
different meanings of the questions) and strictly FOLLOW the format: \
response: question1; question2;...."""

SAG = """\
Answer the {{question}} based on on the document info. For each question \
find as many answers as possible. Response all the answers in a short \
paragraph (as specific as possible).
Relevant Document: {{context}}"""

FAG_MULTIHOP = """\
Answer the following question: {{question}} ,
 with following documents: {{documents}}.
Your response should strictly follow the format:
Explanations :[give your step by step Analysis here ]

FINAL:(BE CONCISE, ONLY a FEW phrases)

let's think step by step"""

FAG_AMBIGUOUS = """\
The question may be ambiguous and have multiple correct answers, and in that \
case, you have to provide a long-form answer including all correct answers.
1. Carefully go through all the given documents.
2.The using your and context, provide answer.
Your response should strictly follow the format:
Explanations (Step 2):[give your step by step Analysis here ]
FINAL(Step 2):
Please ONLY reply according to this format

Question: {{question}}
Document: {{documents}}
let's think step by step"""

TEMPLATES: dict[str, str] = {
    "qg_multihop": QG_MULTIHOP,
    "qg_ambiguous": QG_AMBIGUOUS,
    "sag": SAG,
    "fag_multihop": FAG_MULTIHOP,
    "fag_ambiguous": FAG_AMBIGUOUS,
}

_PLACEHOLDER = re.compile(r"\{\{(\w+)\}\}")


def render_prompt(template_id: str, bindings: dict[str, str]) -> str:
    body = TEMPLATES[template_id]

    def sub(match: re.Match) -> str:
        name = match.group(1)
        if name not in bindings:
            raise MissingBinding(f"{template_id}: no binding for {{{{{name}}}}}")
        return bindings[name]

    return _PLACEHOLDER.sub(sub, body)


# ---------------------------------------------------------------------------
# Completions

TOKEN_ESTIMATE_FACTOR = 1.3  # whitespace tokens -> model tokens, rough


@dataclass(frozen=True)
class Completion:
    text: str
    prompt_tokens: int
    completion_tokens: int
    provider: str
    latency_ms: float = 0.0
    estimated_usage: bool = False


@dataclass
class LedgerEntry:
    completion: Completion
    stage: str  # qg | sag | fag | qa
    dataset: str = ""
    model: str = ""


def estimate_tokens(text: str) -> int:
    return int(len(text.split()) * TOKEN_ESTIMATE_FACTOR)


def prompt_key(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class MockProvider:
    """Replays a recorded transcript; byte-deterministic.

    Entries are keyed by the SHA-256 of the rendered prompt, with a fallback
    key of "<template_id>::<node surface>" so transcripts survive volatile
    document text embedded in prompts.
    """

    name = "mock"

    def __init__(self, entries: dict[str, dict]):
        self._entries = entries

    @classmethod
    def from_file(cls, path: str | Path) -> "MockProvider":
        entries = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                entries[obj["key"]] = obj
        return cls(entries)

    def complete(self, prompt: str, model: str, temperature: float, max_tokens: int,
                 fallback_key: Optional[str] = None) -> Completion:
        entry = self._entries.get(prompt_key(prompt))
        if entry is None and fallback_key is not None:
            entry = self._entries.get(fallback_key)
        if entry is None:
            raise TranscriptMiss(
                f"no transcript entry for prompt hash {prompt_key(prompt)[:12]}… "
                f"or fallback key {fallback_key!r}"
            )
        text = entry["response_text"]
        return Completion(
            text=text,
            prompt_tokens=entry.get("prompt_tokens", estimate_tokens(prompt)),
            completion_tokens=entry.get("completion_tokens", estimate_tokens(text)),
            provider=self.name,
        )


class HttpProvider:
    """Chat-completion client with exponential backoff on transient errors."""

    name = "http"
    RETRYABLE_STATUS = {408, 429, 500, 502, 503, 504}

    def __init__(self, endpoint: str, api_key: str = "", max_retries: int = 3,
                 backoff_s: float = 0.5, timeout: float = 60.0):
        self.endpoint = endpoint
        self.api_key = api_key
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self.timeout = timeout

    def complete(self, prompt: str, model: str, temperature: float, max_tokens: int,
                 fallback_key: Optional[str] = None) -> Completion:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {
            "model": model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
            "max_tokens": max_tokens,
        }
        last_exc: Optional[Exception] = None
        for attempt in range(self.max_retries + 1):
            start = time.monotonic()
            try:
                resp = requests.post(
                    self.endpoint, json=payload, headers=headers, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last_exc = exc
                time.sleep(self.backoff_s * 2**attempt)
                continue
            latency = (time.monotonic() - start) * 1000
            if resp.status_code in self.RETRYABLE_STATUS:
                last_exc = ProviderError(f"HTTP {resp.status_code}")
                time.sleep(self.backoff_s * 2**attempt)
                continue
            if resp.status_code != 200:
                raise ProviderError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            body = resp.json()
            text = body["choices"][0]["message"]["content"]
            usage = body.get("usage") or {}
            estimated = "prompt_tokens" not in usage
            return Completion(
                text=text,
                prompt_tokens=usage.get("prompt_tokens", estimate_tokens(prompt)),
                completion_tokens=usage.get("completion_tokens", estimate_tokens(text)),
                provider=self.name,
                latency_ms=latency,
                estimated_usage=estimated,
            )
        raise RetriesExhausted(str(last_exc))


@dataclass
class Gateway:
    """Front door for all completions; appends every call to a usage ledger."""

    provider: object
    model: str = "mock-model"
    temperature: float = 0.0
    max_tokens: int = 1024
    dataset: str = ""
    ledger: list[LedgerEntry] = field(default_factory=list)

    def complete(self, prompt: str, stage: str, fallback_key: Optional[str] = None) -> Completion:
        completion = self.provider.complete(
            prompt,
            model=self.model,
            temperature=self.temperature,
            max_tokens=self.max_tokens,
            fallback_key=fallback_key,
        )
        self.ledger.append(
            LedgerEntry(completion=completion, stage=stage, dataset=self.dataset,
                        model=self.model)
        )
        return completion


# ---------------------------------------------------------------------------
# Final-answer extraction

_FINAL_MARKER = re.compile(r"final\s*(?:\([^)]*\))?\s*:", re.IGNORECASE)


def parse_final(completion_text: str) -> tuple[str, bool]:
    """Extract the answer after the last FINAL: marker.

    Returns (answer, format_violation). Never raises; with no usable marker
    the whole text is returned trimmed and flagged.
    """
    matches = list(_FINAL_MARKER.finditer(completion_text))
    if matches:
        tail = completion_text[matches[-1].end():].strip()
        if tail:
            return tail, False
    return completion_text.strip(), True


# ---------------------------------------------------------------------------
# Cost accounting


def load_pricing(path: str | Path) -> dict[str, dict[str, float]]:
    return json.loads(Path(path).read_text())


def cost_report(
    ledger: Sequence[LedgerEntry], pricing: dict[str, dict[str, float]]
) -> dict:
    """Aggregate token usage and USD cost per stage and per dataset."""
    total_usd = 0.0
    totals = {"prompt_tokens": 0, "completion_tokens": 0}
    per_stage: dict[str, dict] = {}
    per_dataset: dict[str, dict] = {}
    for entry in ledger:
        if entry.model not in pricing:
            raise UnpricedModel(entry.model)
        rates = pricing[entry.model]
        c = entry.completion
        usd = (
            c.prompt_tokens / 1000 * rates["input_usd_per_1k"]
            + c.completion_tokens / 1000 * rates["output_usd_per_1k"]
        )
        total_usd += usd
        totals["prompt_tokens"] += c.prompt_tokens
        totals["completion_tokens"] += c.completion_tokens
        for bucket, key in ((per_stage, entry.stage), (per_dataset, entry.dataset)):
            slot = bucket.setdefault(
                key, {"prompt_tokens": 0, "completion_tokens": 0, "usd": 0.0, "calls": 0}
            )
            slot["prompt_tokens"] += c.prompt_tokens
            slot["completion_tokens"] += c.completion_tokens
            slot["usd"] += usd
            slot["calls"] += 1
    return {
        "total_usd": total_usd,
        "token_totals": totals,
        "per_stage": per_stage,
        "per_dataset": per_dataset,
        "calls": len(ledger),
    }
