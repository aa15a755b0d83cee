"""Batch conversion: unified-schema question files to per-question parse files."""

from __future__ import annotations

import json
import logging
from pathlib import Path

from sidecar.backend import split_first_sentence

logger = logging.getLogger("sidecar")

FORMALISM_ALIASES = {
    "dep": "dependency", "dependency": "dependency",
    "const": "constituency", "constituency": "constituency",
}
EXTENSIONS = {"dependency": "conllu", "constituency": "ptb"}


def parse_one(backend, text: str, formalism: str) -> tuple[str, str, str | None]:
    """Parse a single sentence; returns (format, payload, warning)."""
    canonical = FORMALISM_ALIASES[formalism]
    sentence, had_more = split_first_sentence(text)
    warning = "multi-sentence input; parsed the first sentence" if had_more else None
    if canonical == "dependency":
        return "conllu", backend.parse_dependency(sentence), warning
    return "ptb", backend.parse_constituency(sentence), warning


def batch_convert(in_path: Path, out_dir: Path, formalism: str, backend) -> int:
    """Write one parse file per dataset record; existing files are skipped.

    Returns the number of files written (reruns are no-ops).
    """
    canonical = FORMALISM_ALIASES[formalism]
    ext = EXTENSIONS[canonical]
    out_dir.mkdir(parents=True, exist_ok=True)
    written = 0
    with open(in_path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            qid, question = row["id"], row.get("question", "")
            if not question.strip():
                logger.warning("skipping %s: empty question", qid)
                continue
            target = out_dir / f"{qid}.{ext}"
            if target.exists():
                continue
            _, payload, warning = parse_one(backend, question, canonical)
            if warning:
                logger.warning("%s: %s", qid, warning)
            target.write_text(payload, encoding="utf-8")
            written += 1
    return written
