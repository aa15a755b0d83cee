"""Command-line driver: index building, pipeline runs, evaluation, cost.

Exit codes: 0 ok, 2 input error, 3 dependency unavailable, 4 partial failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

from . import evalkit, llm, pipeline, syntax
from . import index as idx

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DEPENDENCY = 3
EXIT_PARTIAL = 4


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def load_config(path: str) -> dict:
    text = Path(path).read_text()
    if path.endswith((".yaml", ".yml")):
        import yaml

        return yaml.safe_load(text)
    return json.loads(text)


def pipeline_config_from(cfg: dict) -> pipeline.PipelineConfig:
    fields = {
        k: cfg[k]
        for k in (
            "formalism",
            "min_phrase_tokens",
            "candidates_per_node",
            "selected_per_node",
            "docs_per_query",
            "merge_cap",
            "tree_retrieval_per_node_k",
            "tree_retrieval_rerank_m",
            "leaf_mode",
            "qa_style",
        )
        if k in cfg
    }
    if "skip_labels" in cfg:
        fields["skip_labels"] = frozenset(cfg["skip_labels"])
    return pipeline.PipelineConfig(**fields)


def make_gateway(cfg: dict, dataset: str = "") -> llm.Gateway:
    if cfg.get("transcript"):
        provider = llm.MockProvider.from_file(cfg["transcript"])
        model = cfg.get("model", "mock-model")
    elif cfg.get("endpoint"):
        api_key = os.environ.get(cfg.get("api_key_env", ""), "")
        provider = llm.HttpProvider(
            cfg["endpoint"],
            api_key=api_key,
            max_retries=cfg.get("max_retries", 3),
            timeout=cfg.get("timeout_s", 60.0),
        )
        model = cfg.get("model", "gpt-4o-mini")
    else:
        raise ValueError("config must set either 'transcript' or 'endpoint'")
    return llm.Gateway(
        provider=provider,
        model=model,
        temperature=cfg.get("temperature", 0.0),
        max_tokens=cfg.get("max_tokens", 1024),
        dataset=dataset,
    )


def load_parse(parses_dir: Path, qid: str, formalism: str) -> syntax.SyntaxTree:
    if formalism == "dependency":
        return syntax.parse_conllu((parses_dir / f"{qid}.conllu").read_text())
    return syntax.parse_ptb((parses_dir / f"{qid}.ptb").read_text())


def fetch_parse_from_sidecar(url: str, question: str, formalism: str) -> syntax.SyntaxTree:
    import requests

    resp = requests.post(
        f"{url.rstrip('/')}/parse",
        json={"text": question, "formalism": formalism},
        timeout=60,
    )
    resp.raise_for_status()
    payload = resp.json()["payload"]
    if formalism == "dependency":
        return syntax.parse_conllu(payload)
    return syntax.parse_ptb(payload)


def cmd_index(args) -> int:
    corpus = Path(args.corpus)
    if not corpus.exists():
        print(f"error: corpus file not found: {corpus}", file=sys.stderr)
        return EXIT_INPUT
    try:
        index = idx.build_index(idx.read_corpus(corpus), k1=args.k1, b=args.b)
    except (idx.DuplicateDocId, idx.EmptyCorpus, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    idx.save_index(index, args.out)
    print(f"indexed {index.doc_count} paragraphs into {args.out}")
    return EXIT_OK


def _existing_qids(out_path: Path) -> set[str]:
    done = set()
    if out_path.exists():
        with open(out_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    done.add(json.loads(line)["question_id"])
    return done


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.index:
        cfg["index_dir"] = args.index
    if not Path(args.dataset).exists():
        print(f"error: dataset not found: {args.dataset}", file=sys.stderr)
        return EXIT_INPUT

    config = pipeline_config_from(cfg)
    try:
        index = idx.load_index(cfg["index_dir"])
    except (OSError, KeyError) as exc:
        print(f"error: cannot load index: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY

    records = list(evalkit.load_dataset(args.dataset, cfg.get("dataset_format", "unified")))
    if args.seed is not None and args.sample:
        records = evalkit.sample(records, args.sample, args.seed)
    if args.limit:
        records = records[: args.limit]

    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    done = _existing_qids(out_path)

    manifest = {
        "config": cfg,
        "dataset": args.dataset,
        "dataset_sha256": _sha256_file(Path(args.dataset)),
        "method": args.method,
        "seed": args.seed,
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "version": "treeqa-0.1.0",
        "resumed_question_ids": sorted(done),
    }
    manifest_path = out_path.with_suffix(out_path.suffix + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))

    parses_dir = Path(args.parses) if args.parses else None
    failures = 0
    attempted = 0
    with open(out_path, "a", encoding="utf-8") as out:
        for rec in records:
            if rec.question_id in done:
                continue
            attempted += 1
            gateway = make_gateway(cfg, dataset=Path(args.dataset).stem)
            try:
                if args.method == "ablation:cot-only":
                    tree = None
                elif parses_dir is not None:
                    tree = load_parse(parses_dir, rec.question_id, config.formalism)
                elif args.sidecar:
                    tree = fetch_parse_from_sidecar(
                        args.sidecar, rec.question, config.formalism
                    )
                else:
                    print("error: need --parses or --sidecar", file=sys.stderr)
                    return EXIT_DEPENDENCY
                trace = _run_one(rec, args.method, config, index, gateway, cfg, tree)
                out.write(trace.to_json() + "\n")
                out.flush()
            except Exception as exc:  # noqa: BLE001 - per-question isolation
                failures += 1
                print(f"question {rec.question_id} failed: {exc}", file=sys.stderr)

    success_fraction = cfg.get("required_success_fraction", 1.0)
    if attempted and (attempted - failures) / attempted < success_fraction:
        print(f"partial failure: {failures}/{attempted} questions failed", file=sys.stderr)
        return EXIT_PARTIAL
    print(f"wrote {attempted - failures} traces to {out_path}")
    return EXIT_OK


def _run_one(rec, method, config, index, gateway, cfg, tree):
    if method.startswith("ablation:"):
        return pipeline.run_ablation(
            rec.question_id, rec.question, method.split(":", 1)[1],
            config, index, gateway, tree,
        )
    if method.startswith("tree-retrieval"):
        scorer_url = cfg.get("scorer_url")
        scorer = (
            idx.HttpScorer(scorer_url) if scorer_url else idx.passthrough_scorer(index)
        )
        return pipeline.run_tree_retrieval(
            rec.question_id, rec.question, config, index, scorer, gateway, tree
        )
    return pipeline.run_treerare(
        rec.question_id, rec.question, config, index, gateway, tree, method=method
    )


def cmd_eval(args) -> int:
    traces_path = Path(args.traces)
    if not traces_path.exists():
        print(f"error: traces not found: {traces_path}", file=sys.stderr)
        return EXIT_INPUT
    predictions: dict[str, str] = {}
    with open(traces_path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                trace = pipeline.RunTrace.from_json(line)
                predictions[trace.question_id] = trace.final_answer
    if not predictions:
        print("error: no traces to evaluate", file=sys.stderr)
        return EXIT_INPUT
    records = list(evalkit.load_dataset(args.dataset, args.dataset_format))
    known = {r.question_id for r in records}
    missing = set(predictions) - known
    if missing:
        print(f"error: traces reference unknown question ids: {sorted(missing)[:5]}",
              file=sys.stderr)
        return EXIT_INPUT
    metrics = [m.strip() for m in args.metrics.split(",")]
    report = evalkit.score_predictions(predictions, records, metrics)
    Path(args.out).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    print(report.to_table())
    return EXIT_OK


def cmd_cost(args) -> int:
    traces_path = Path(args.traces)
    if not traces_path.exists():
        print(f"error: traces not found: {traces_path}", file=sys.stderr)
        return EXIT_INPUT
    try:
        pricing = llm.load_pricing(args.pricing)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read pricing: {exc}", file=sys.stderr)
        return EXIT_INPUT
    ledger: list[llm.LedgerEntry] = []
    with open(traces_path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            trace = pipeline.RunTrace.from_json(line)
            for usage in trace.usage:
                ledger.append(
                    llm.LedgerEntry(
                        completion=llm.Completion(
                            text="",
                            prompt_tokens=usage["prompt_tokens"],
                            completion_tokens=usage["completion_tokens"],
                            provider="trace",
                        ),
                        stage=usage["stage"],
                        dataset=trace.method,
                        model=usage["model"],
                    )
                )
    try:
        report = llm.cost_report(ledger, pricing)
    except llm.UnpricedModel as exc:
        print(f"error: unpriced model: {exc}", file=sys.stderr)
        return EXIT_INPUT
    Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True))
    # CSV breakdown behind the per-method cost chart.
    csv_path = Path(args.out).with_suffix(".csv")
    lines = ["group,kind,prompt_tokens,completion_tokens,usd,calls"]
    for kind, bucket in (("stage", report["per_stage"]), ("dataset", report["per_dataset"])):
        for key, slot in sorted(bucket.items()):
            lines.append(
                f"{key},{kind},{slot['prompt_tokens']},{slot['completion_tokens']},"
                f"{slot['usd']:.6f},{slot['calls']}"
            )
    csv_path.write_text("\n".join(lines) + "\n")
    print(f"total: ${report['total_usd']:.4f} over {report['calls']} calls")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="treeqa")
    sub = parser.add_subparsers(dest="command", required=True)

    p_index = sub.add_parser("index", help="corpus index operations")
    index_sub = p_index.add_subparsers(dest="index_command", required=True)
    p_build = index_sub.add_parser("build", help="build a BM25 index")
    p_build.add_argument("--corpus", required=True)
    p_build.add_argument("--out", required=True)
    p_build.add_argument("--k1", type=float, default=idx.DEFAULT_K1)
    p_build.add_argument("--b", type=float, default=idx.DEFAULT_B)
    p_build.set_defaults(func=cmd_index)

    p_run = sub.add_parser("run", help="run a pipeline over a dataset")
    p_run.add_argument("--dataset", required=True)
    p_run.add_argument("--method", required=True)
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--index", default=None)
    p_run.add_argument("--parses", default=None)
    p_run.add_argument("--sidecar", default=None)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--sample", type=int, default=None)
    p_run.add_argument("--limit", type=int, default=None)
    p_run.set_defaults(func=cmd_run)

    p_eval = sub.add_parser("eval", help="score traces against a dataset")
    p_eval.add_argument("--traces", required=True)
    p_eval.add_argument("--dataset", required=True)
    p_eval.add_argument("--dataset-format", default="unified")
    p_eval.add_argument("--metrics", default="cover_em")
    p_eval.add_argument("--out", required=True)
    p_eval.set_defaults(func=cmd_eval)

    p_cost = sub.add_parser("cost", help="token/cost report from traces")
    p_cost.add_argument("--traces", required=True)
    p_cost.add_argument("--pricing", required=True)
    p_cost.add_argument("--out", required=True)
    p_cost.set_defaults(func=cmd_cost)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
