#!/usr/bin/env python3
"""Generate the committed toy benchmark fixtures.

Produces a 50-paragraph corpus, 10 two-hop questions with dependency parse
files, and a scripted completion transcript that drives every pipeline mode
offline. Output is deterministic; rerunning overwrites identical content.
"""

from __future__ import annotations

import json
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "toy"

AUTHORS = [
    "Alice Merrow", "Boris Kantor", "Carla Diaz", "Deniz Aksoy", "Elena Voss",
    "Farid Haddad", "Greta Lindqvist", "Hiro Tanaka", "Irene Okafor", "Jonas Bakker",
]
COUNTRIES = [
    "Iceland", "Uruguay", "Slovenia", "Morocco", "Finland",
    "Portugal", "Vietnam", "Kenya", "Bolivia", "Estonia",
]
FILLER_TOPICS = [
    ("geology", "Basalt columns form when thick lava flows cool slowly."),
    ("cuisine", "Sourdough bread relies on wild yeast and lactic acid bacteria."),
    ("astronomy", "Neutron stars pack more mass than the sun into a city-sized sphere."),
    ("sailing", "A close-hauled course keeps the sails trimmed tight against the wind."),
    ("music", "The hurdy-gurdy produces sound with a rosined wheel against strings."),
    ("botany", "Mangrove roots filter salt and anchor coastal sediment."),
    ("chess", "The Sicilian Defence is the most common reply to the king pawn opening."),
    ("weather", "Lenticular clouds form in the crests of atmospheric standing waves."),
    ("trains", "Narrow gauge railways trade capacity for cheaper mountain construction."),
    ("ceramics", "Celadon glazes owe their color to iron oxide fired in reduction."),
]

CONLLU_TEMPLATE = """\
# text = Where was the author of {book} born ?
1\tWhere\twhere\tADV\tWRB\t_\t7\tadvmod\t_\t_
2\twas\tbe\tAUX\tVBD\t_\t7\taux\t_\t_
3\tthe\tthe\tDET\tDT\t_\t4\tdet\t_\t_
4\tauthor\tauthor\tNOUN\tNN\t_\t7\tnsubj\t_\t_
5\tof\tof\tADP\tIN\t_\t4\tcase\t_\t_
6\t{book}\t{book}\tPROPN\tNNP\t_\t4\tnmod\t_\t_
7\tborn\tbear\tVERB\tVBN\t_\t0\troot\t_\t_
8\t?\t?\tPUNCT\t.\t_\t7\tpunct\t_\t_
"""

PTB_TEMPLATE = (
    "(ROOT (SBARQ (WHADVP (WRB Where)) (SQ (VBD was) "
    "(NP (DT the) (NN author) (PP (IN of) (NP (NNP {book})))) "
    "(VP (VBN born))) (. ?)))"
)


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "parses").mkdir(exist_ok=True)

    corpus = []
    questions = []
    transcript = []
    for i in range(10):
        book = f"Quartzfable{i}"
        author = AUTHORS[i]
        country = COUNTRIES[i]
        corpus.append({
            "id": f"book-{i}",
            "title": book,
            "text": f"{book} is a novel written by {author}. "
                    f"It follows a cartographer across three fictional archipelagos.",
        })
        corpus.append({
            "id": f"author-{i}",
            "title": author,
            "text": f"{author} was born in {country} and later became a celebrated "
                    f"novelist, best known for {book}.",
        })
        qid = f"toy-{i}"
        question = f"Where was the author of {book} born ?"
        questions.append({
            "id": qid,
            "question": question,
            "answers": [country],
        })
        (OUT / "parses" / f"{qid}.conllu").write_text(CONLLU_TEMPLATE.format(book=book))
        (OUT / "parses" / f"{qid}.ptb").write_text(PTB_TEMPLATE.format(book=book) + "\n")

        surface = f"the author of {book}"
        transcript.append({
            "key": f"qg_multihop::{surface}",
            "response_text": (
                f"response: Who is the author of {book}?; "
                f"Where was the writer of {book} born?; "
                f"What kind of book is {book}?"
            ),
            "prompt_tokens": 120,
            "completion_tokens": 40,
        })
        transcript.append({
            "key": f"sag::{surface}",
            "response_text": (
                f"The author of {book} is {author}. "
                f"{author} was born in {country}."
            ),
            "prompt_tokens": 400,
            "completion_tokens": 30,
        })
        transcript.append({
            "key": f"fag_multihop::{qid}",
            "response_text": (
                f"Explanations: the evidence states that {book} was written by "
                f"{author}, who was born in {country}.\n"
                f"FINAL: {country}"
            ),
            "prompt_tokens": 300,
            "completion_tokens": 35,
        })

    for j in range(30):
        topic, text = FILLER_TOPICS[j % len(FILLER_TOPICS)]
        corpus.append({
            "id": f"filler-{j}",
            "title": f"Notes on {topic} {j}",
            "text": text + f" Entry number {j} in the miscellany.",
        })

    with open(OUT / "corpus.jsonl", "w") as fh:
        for doc in corpus:
            fh.write(json.dumps(doc) + "\n")
    with open(OUT / "questions.jsonl", "w") as fh:
        for q in questions:
            fh.write(json.dumps(q) + "\n")
    with open(OUT / "transcript.jsonl", "w") as fh:
        for entry in transcript:
            fh.write(json.dumps(entry) + "\n")

    (OUT / "pricing.json").write_text(json.dumps(
        {"mock-model": {"input_usd_per_1k": 0.15, "output_usd_per_1k": 0.60}}, indent=2))
    print(f"wrote fixtures under {OUT}")


if __name__ == "__main__":
    main()
