"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line and enforcing its stated tolerance and runtime budget."""

import random
import time

import pytest

from treeqa import evalkit, llm, pipeline, syntax
from treeqa import index as idx
from test_index import bm25_oracle, random_corpus, WORDS


def report(name, ok=True):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}", flush=True)


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def test_bm25_oracle_equivalence():
    """100-doc corpus, 20 queries: ranking identical to brute force, <1e-6, <2s."""
    rng = random.Random(20240501)
    paragraphs = random_corpus(rng, 100)
    with Timer() as timer:
        index = idx.build_index(paragraphs)
        for _ in range(20):
            query = " ".join(rng.choices(WORDS, k=rng.randint(1, 4)))
            expected = bm25_oracle(paragraphs, query, index.k1, index.b)
            got = idx.search(index, query, k=100)
            assert [h.doc_id for h in got.hits] == [d for d, _ in expected]
            assert all(
                abs(h.score - s) < 1e-6 for h, (_, s) in zip(got.hits, expected)
            )
    assert timer.elapsed < 2.0
    report("BM25 oracle equivalence (100 docs, 20 queries, <1e-6, <2s)")


def _random_conllu(rng, size):
    rows = []
    for i in range(1, size + 1):
        head = 0 if i == 1 else rng.randint(1, i - 1)
        rows.append(f"{i}\tw{i}\t_\t_\t_\t_\t{head}\tdep{i % 7}\t_\t_")
    return "\n".join(rows) + "\n"


def test_traversal_property_suite():
    """200 random trees: children-before-parent + prune monotonicity, <5s."""
    rng = random.Random(77)
    with Timer() as timer:
        for _ in range(200):
            tree = syntax.parse_conllu(_random_conllu(rng, rng.randint(1, 50)))
            pruned = syntax.prune(tree, syntax.PrunePolicy(1, frozenset()))
            order = syntax.traversal_order(pruned)
            position = {nid: i for i, nid in enumerate(order)}
            for nid in order:
                for cid in syntax.effective_children(pruned, nid):
                    assert position[cid] < position[nid]
            processed = [
                set(syntax.traversal_order(syntax.prune(
                    tree, syntax.PrunePolicy(lmin, frozenset()))))
                for lmin in (3, 6, 10)
            ]
            assert processed[0] >= processed[1] >= processed[2]
    assert timer.elapsed < 5.0
    report("Traversal property suite (200 trees, L_min in {3,6,10}, <5s)")


EVOLUTION_SURFACES = [
    "credits for 'Evolution'",
    "screenwriter with credits for 'Evolution'",
    "Nicolas Cage and Téa Leoni",
    "starring Nicolas Cage and Téa Leoni",
    "film starring Nicolas Cage and Téa Leoni",
]


def test_evolution_replay(evolution_dir, evolution_index):
    """Fixture replay: 5 subcomponent nodes, expected final answer, <3s."""
    with Timer() as timer:
        tree = syntax.parse_conllu((evolution_dir / "evolution.conllu").read_text())
        provider = llm.MockProvider.from_file(evolution_dir / "transcript.jsonl")
        gateway = llm.Gateway(provider=provider, model="mock-model")
        trace = pipeline.run_treerare(
            "evolution", tree.question, pipeline.PipelineConfig(),
            evolution_index, gateway, tree,
        )
    assert [r.surface for r in trace.node_records] == EVOLUTION_SURFACES
    assert "David Diamond and David Weissman" in trace.final_answer
    gold = ["David Diamond and David Weissman"]
    assert evalkit.cover_em(trace.final_answer, gold) == 1
    assert timer.elapsed < 3.0
    report("Evolution replay (5 nodes, gold answer, COVER-EM=1, <3s)")


def _run_toy_benchmark(toy_dir, toy_index):
    records = list(evalkit.load_dataset(toy_dir / "questions.jsonl"))
    traces = []
    for rec in records:
        gateway = llm.Gateway(
            provider=llm.MockProvider.from_file(toy_dir / "transcript.jsonl"),
            model="mock-model",
        )
        tree = syntax.parse_conllu(
            (toy_dir / "parses" / f"{rec.question_id}.conllu").read_text()
        )
        traces.append(pipeline.run_treerare(
            rec.question_id, rec.question, pipeline.PipelineConfig(),
            toy_index, gateway, tree,
        ))
    return records, traces


def test_toy_benchmark(toy_dir, toy_index):
    """10 two-hop questions: >=9/10 COVER-EM, byte-identical reruns, <10s."""
    with Timer() as timer:
        records, traces = _run_toy_benchmark(toy_dir, toy_index)
        _, traces_again = _run_toy_benchmark(toy_dir, toy_index)
    correct = sum(
        evalkit.cover_em(t.final_answer, r.answers)
        for r, t in zip(records, traces)
    )
    assert correct >= 9
    assert [t.to_json() for t in traces] == [t.to_json() for t in traces_again]
    assert timer.elapsed < 10.0
    report(f"Toy benchmark ({correct}/10 COVER-EM, byte-identical traces, <10s)")


def test_ablation_structural_suite(toy_dir, toy_index):
    """Per-mode structural assertions on the emitted traces."""
    records = list(evalkit.load_dataset(toy_dir / "questions.jsonl"))
    rec = records[0]
    tree = syntax.parse_conllu(
        (toy_dir / "parses" / f"{rec.question_id}.conllu").read_text()
    )

    def gateway():
        return llm.Gateway(
            provider=llm.MockProvider.from_file(toy_dir / "transcript.jsonl"),
            model="mock-model",
        )

    no_ir = pipeline.run_ablation(rec.question_id, rec.question, "no-ir",
                                  pipeline.PipelineConfig(), toy_index, gateway(), tree)
    assert no_ir.search_calls == 0

    no_qg = pipeline.run_ablation(rec.question_id, rec.question, "no-qg",
                                  pipeline.PipelineConfig(), toy_index, gateway(), tree)
    assert all(r.queries == [r.surface] for r in no_qg.node_records)

    cot = pipeline.run_ablation(rec.question_id, rec.question, "cot-only",
                                pipeline.PipelineConfig(), None, gateway(), None)
    assert cot.search_calls == 0 and cot.llm_calls == 1

    no_sag = pipeline.run_ablation(rec.question_id, rec.question, "no-sag",
                                   pipeline.PipelineConfig(), toy_index, gateway(), tree)
    for record in no_sag.node_records:
        for hit in record.retrieved:
            assert toy_index.paragraph(hit["doc_id"]).text in record.evidence

    ir_only = pipeline.run_ablation(rec.question_id, rec.question, "ir-only",
                                    pipeline.PipelineConfig(), toy_index, gateway(), tree)
    assert ir_only.search_calls == 1 and ir_only.llm_calls == 1
    report("Ablation structural suite (no-ir/no-qg/cot-only/no-sag/ir-only)")


def _disjoint_retrieval_setup():
    """Tree with 3 child nodes + root whose queries hit disjoint doc sets."""
    doc = (
        "1\talphaterm\t_\t_\t_\t_\t4\tdep\t_\t_\n"
        "2\tbetaterm\t_\t_\t_\t_\t4\tdep\t_\t_\n"
        "3\tgammaterm\t_\t_\t_\t_\t4\tdep\t_\t_\n"
        "4\trootterm\t_\t_\t_\t_\t0\troot\t_\t_\n"
    )
    tree = syntax.parse_conllu(doc)
    paragraphs = []
    for term in ("alphaterm", "betaterm", "gammaterm", "rootterm"):
        for i in range(10):
            paragraphs.append(idx.Paragraph(
                doc_id=f"{term}-{i:02d}", title="",
                text=f"{term} document {'pad ' * i}",
            ))
    index = idx.build_index(paragraphs)
    gateway = llm.Gateway(
        provider=llm.MockProvider(
            {"fag_multihop::q": {"response_text": "FINAL: done"}}
        ),
        model="mock-model",
    )
    config = pipeline.PipelineConfig(min_phrase_tokens=1, skip_labels=frozenset())
    return tree, index, gateway, config


def test_tree_retrieval_suite():
    """Pool cardinality, passthrough identity, reversed-scorer inversion."""
    tree, index, gateway, config = _disjoint_retrieval_setup()
    trace = pipeline.run_tree_retrieval(
        "q", tree.question, config, index, idx.passthrough_scorer(index), gateway, tree
    )
    root = trace.node_records[-1]
    n_active = len(trace.node_records)
    assert len(root.retrieved) <= n_active * config.tree_retrieval_per_node_k
    assert len(root.reranked) == config.tree_retrieval_rerank_m  # exactly 15

    bm25_order = sorted(root.retrieved, key=lambda r: (-r["score"], r["doc_id"]))
    assert [r["doc_id"] for r in root.reranked] == \
        [r["doc_id"] for r in bm25_order[:15]]

    tree2, index2, _, _ = _disjoint_retrieval_setup()
    gateway2 = llm.Gateway(
        provider=llm.MockProvider(
            {"fag_multihop::q": {"response_text": "FINAL: done"}}
        ),
        model="mock-model",
    )

    def reversed_scorer(anchor, passages):
        return [-s for s in idx.passthrough_scorer(index2)(anchor, passages)]

    reversed_trace = pipeline.run_tree_retrieval(
        "q", tree2.question, config, index2, reversed_scorer, gateway2, tree2
    )
    rev_root = reversed_trace.node_records[-1]
    # negated scores rank ascending by BM25, ties still by ascending doc_id
    reversed_order = sorted(rev_root.retrieved, key=lambda r: (r["score"], r["doc_id"]))
    assert [r["doc_id"] for r in rev_root.reranked] == \
        [r["doc_id"] for r in reversed_order[:15]]
    assert [r["doc_id"] for r in rev_root.reranked] != \
        [r["doc_id"] for r in root.reranked]
    report("Tree-Retrieval suite (pool <= 10/node, exactly 15 reranked, scorer applied)")


COVER_EM_CASES = [
    ("from January 20, 1969, to August 9, 1974", ["1969 until 1974"], 0),
    ("Paris", ["Paris"], 1),
    ("the capital is Paris", ["Paris"], 1),
    ("The Family Man.", ["family man"], 1),
    ("answer: Barack Obama", ["obama"], 1),
    ("completely unrelated text", ["Paris"], 0),
    ("An Apple", ["apple"], 1),
    ("Kansas Song", ["jayhawk"], 0),
    ("I'm a Jayhawk!", ["im a jayhawk"], 1),
    ("the answer is 42", ["42"], 1),
    ("", ["anything"], 0),
    ("mentions beta somewhere", ["alphagold", "beta"], 1),
]

ANSWER_RECALL_CASES = [
    ("red green blue", ["red", "green", "blue"], 1.0),
    ("red green", ["red", "green", "blue"], 2 / 3),
    ("only delta appears here", ["delta", "xray", "yankee", "zulu"], 0.25),
    ("nothing relevant", ["qqq"], 0.0),
    ("RED! Green?", ["red", "green"], 1.0),
    ("the quick brown fox", ["quick brown"], 1.0),
    ("quick fox", ["quick brown"], 0.0),
    ("one two three four", ["one", "two", "three", "four"], 1.0),
    ("one three", ["one", "twixt", "three", "fourfold"], 0.5),
    ("foo", ["foo", "foo bar"], 0.5),
    ("foo bar", ["foo", "foo bar"], 1.0),
    ("", ["gold"], 0.0),
]

ENTITY_RECALL_CASES = [
    (
        "It may mean the University of Kansas or Kansas State University.",
        ["University of Kansas", "Kansas State University"],
        1.0,
    ),
    ("Kansas is nice", ["University of Kansas"], 0.0),
    ("", ["Entity"], 0.0),
    ("both Jupiter and Saturn", ["Jupiter", "Saturn"], 1.0),
    ("only Jupiter", ["Jupiter", "Saturn"], 0.5),
    ("JUPITER!", ["Jupiter"], 1.0),
    ("the planet jupiter", ["Jupiter"], 1.0),
    ("Saturn V rocket", ["Saturn"], 1.0),
    ("rocket science", ["Saturn"], 0.0),
    ("Alpha Beta Gamma Delta", ["Alpha Beta", "Gamma Delta"], 1.0),
    ("Alpha Gamma", ["Alpha Beta", "Gamma Delta"], 0.0),
    ("Alpha Beta only", ["Alpha Beta", "Gamma Delta"], 0.5),
]

DISAMBIG_F1_CASES = [
    ("Answers include the red sky and the blue lake.",
     [("q1", "red sky"), ("q2", "blue lake")], 1.0),
    ("", [("q", "gold")], 0.0),
    ("the found answer is here", [("q1", "zzyzx"), ("q2", "found answer")], 0.5),
    ("exact match", [("q", "exact match")], 1.0),
    # gold "red apple pie" vs window "apple tart": overlap 1,
    # precision 1/2, recall 1/3 -> F1 = 0.4
    ("apple tart", [("q", "red apple pie")], 0.4),
    ("apple tart", [("q1", "apple tart"), ("q2", "red apple pie")], 0.7),
    ("no overlap at all", [("q", "zzz yyy")], 0.0),
    ("one two three", [("q", "one two three")], 1.0),
    ("one two", [("q1", "one two"), ("q2", "qqq")], 0.5),
    # substring containment counts: "word" appears inside "wordish"
    ("wordish", [("q", "word")], 1.0),
    # no shared tokens and no containment -> 0.0
    ("totally different", [("q", "word")], 0.0),
    ("a b c d", [("q1", "a b"), ("q2", "c d")], 1.0),
]


def test_metric_table():
    """12 hand-computed fixture cases per metric, exact match."""
    for pred, golds, expected in COVER_EM_CASES:
        assert evalkit.cover_em(pred, golds) == expected, (pred, golds)
    for pred, golds, expected in ANSWER_RECALL_CASES:
        assert evalkit.answer_recall(pred, golds) == pytest.approx(expected), (pred, golds)
    for pred, ents, expected in ENTITY_RECALL_CASES:
        assert evalkit.entity_recall(pred, ents) == pytest.approx(expected), (pred, ents)
    for pred, pairs, expected in DISAMBIG_F1_CASES:
        assert evalkit.disambig_f1(pred, pairs) == pytest.approx(expected), (pred, pairs)
    report("Metric table (12 cases x 4 metrics, exact)")


def test_cost_accounting(toy_dir, toy_index):
    """100-completion ledger: per-stage sums, USD to the cent, 2n+1 calls."""
    pricing = {"mock-model": {"input_usd_per_1k": 0.15, "output_usd_per_1k": 0.60}}
    ledger = []
    for i in range(100):
        stage = ("qg", "sag", "fag")[i % 3]
        ledger.append(llm.LedgerEntry(
            completion=llm.Completion(
                text="", prompt_tokens=137, completion_tokens=59, provider="mock"
            ),
            stage=stage, dataset="toy", model="mock-model",
        ))
    result = llm.cost_report(ledger, pricing)
    stage_prompt = sum(s["prompt_tokens"] for s in result["per_stage"].values())
    stage_completion = sum(s["completion_tokens"] for s in result["per_stage"].values())
    assert stage_prompt == result["token_totals"]["prompt_tokens"] == 13700
    assert stage_completion == result["token_totals"]["completion_tokens"] == 5900
    # hand arithmetic: 100 * (137*0.00015 + 59*0.0006) = 5.595 USD
    assert abs(result["total_usd"] - 5.595) < 0.005

    _, traces = _run_toy_benchmark(toy_dir, toy_index)
    for trace in traces:
        assert trace.llm_calls == 2 * len(trace.node_records) + 1
    report("Cost accounting (stage sums, USD to the cent, 2n+1 call invariant)")
