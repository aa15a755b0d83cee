"""Parser backends.

The default backend is a deterministic rule-based English parser: it needs no
model downloads, and its output satisfies the structural contract the engine's
ingestion enforces (single root, acyclic heads, balanced brackets, leaves equal
to the token sequence). A neural backend based on the ``stanza`` toolkit is
selected with ``backend="stanza"`` when that package is installed; the pinned
model versions live in ``models.lock.json`` next to this module.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources

TOKEN_RE = re.compile(r"[A-Za-z0-9]+(?:['’-][A-Za-z0-9]+)*|[^\sA-Za-z0-9]")
SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+(?=\S)")

DETERMINERS = frozenset(
    "a an the this that these those every each some any no".split()
)
PREPOSITIONS = frozenset(
    "of in on at by for with from to about over under between during "
    "against into after before through among across within".split()
)
CONJUNCTIONS = frozenset("and or but nor".split())
AUXILIARIES = frozenset(
    "is are was were be been being am do does did has have had will would "
    "can could may might shall should must".split()
)
WH_WORDS = frozenset("who what where when which why how whom whose".split())


class ModelUnavailable(Exception):
    """The requested backend's models are not installed."""


class ParseFailure(Exception):
    """The backend failed on a given input; the message echoes the input."""


def load_lockfile() -> dict:
    with resources.files("sidecar").joinpath("models.lock.json").open() as fh:
        return json.load(fh)


def tokenize(text: str) -> list[str]:
    return TOKEN_RE.findall(text)


def split_first_sentence(text: str) -> tuple[str, bool]:
    """Return (first sentence, had_more) for possibly multi-sentence input."""
    parts = SENTENCE_SPLIT_RE.split(text.strip(), maxsplit=1)
    return parts[0], len(parts) > 1


def _word_class(token: str) -> str:
    low = token.lower()
    if not any(ch.isalnum() for ch in token):
        return "punct"
    if low in DETERMINERS:
        return "det"
    if low in PREPOSITIONS:
        return "case"
    if low in CONJUNCTIONS:
        return "cc"
    if low in AUXILIARIES:
        return "aux"
    if low in WH_WORDS:
        return "wh"
    return "content"


_UPOS = {
    "punct": "PUNCT", "det": "DET", "case": "ADP",
    "cc": "CCONJ", "aux": "AUX", "wh": "PRON", "content": "NOUN",
}
_PTB_TAG = {
    "det": "DT", "case": "IN", "cc": "CC", "aux": "VB",
    "wh": "WP", "content": "NN",
}


def _escape_ptb(token: str) -> str:
    return token.replace("(", "-LRB-").replace(")", "-RRB-")


@dataclass(frozen=True)
class HeuristicBackend:
    """Deterministic rule-based parser; see module docstring."""

    name: str = "heuristic-en"

    def parse_dependency(self, text: str) -> str:
        tokens = tokenize(text)
        if not tokens:
            raise ParseFailure(f"no tokens in input: {text!r}")
        classes = [_word_class(t) for t in tokens]
        content = [i for i, c in enumerate(classes) if c == "content"]
        # Heads chain rightward to the next content token, making the last
        # content token the single root; function words attach the same way,
        # so every arc points right and the structure is trivially acyclic.
        anchor = content[-1] if content else 0
        rows = []
        for i, (tok, cls) in enumerate(zip(tokens, classes)):
            nxt = next((j for j in content if j > i), None)
            if i == anchor:
                head, rel = 0, "root"
            elif nxt is not None:
                head, rel = nxt + 1, _dep_label(cls)
            else:
                head, rel = anchor + 1, _dep_label(cls)
            rows.append(
                f"{i + 1}\t{tok}\t_\t{_UPOS[cls]}\t_\t_\t{head}\t{rel}\t_\t_"
            )
        return "\n".join(rows) + "\n"

    def parse_constituency(self, text: str) -> str:
        tokens = tokenize(text)
        if not tokens:
            raise ParseFailure(f"no tokens in input: {text!r}")
        leaves = []
        for tok in tokens:
            cls = _word_class(tok)
            tag = tok if cls == "punct" else _PTB_TAG[cls]
            leaves.append(f"({_escape_ptb(tag)} {_escape_ptb(tok)})")
        return f"(ROOT (S {' '.join(leaves)}))"


def _dep_label(cls: str) -> str:
    if cls == "content":
        return "dep"
    if cls == "wh":
        return "advmod"
    return cls


class StanzaBackend:
    """Neural parser backed by the stanza toolkit (optional dependency)."""

    name = "stanza"

    def __init__(self):
        try:
            import stanza  # noqa: F401
        except ImportError as exc:
            raise ModelUnavailable(
                "stanza is not installed; install it and download the English "
                "models pinned in models.lock.json, or use the default backend"
            ) from exc
        import stanza

        lock = load_lockfile()["stanza"]
        self._dep = stanza.Pipeline(
            "en", processors="tokenize,pos,lemma,depparse",
            package=lock["package"], download_method=None,
        )
        self._const = stanza.Pipeline(
            "en", processors="tokenize,pos,constituency",
            package=lock["package"], download_method=None,
        )

    def parse_dependency(self, text: str) -> str:
        doc = self._dep(text)
        sent = doc.sentences[0]
        rows = [
            f"{w.id}\t{w.text}\t{w.lemma or '_'}\t{w.upos or '_'}\t_\t_"
            f"\t{w.head}\t{w.deprel or 'dep'}\t_\t_"
            for w in sent.words
        ]
        return "\n".join(rows) + "\n"

    def parse_constituency(self, text: str) -> str:
        doc = self._const(text)
        return str(doc.sentences[0].constituency)


_BACKENDS = {"heuristic-en": HeuristicBackend, "stanza": StanzaBackend}


def get_backend(name: str = "heuristic-en"):
    if name not in _BACKENDS:
        raise ModelUnavailable(f"unknown backend: {name}")
    return _BACKENDS[name]()
