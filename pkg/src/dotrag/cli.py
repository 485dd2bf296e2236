"""Command-line entry point: ``dotrag query|eval-retrieval|judge|prep ...``.

Exit codes: 0 on success, 1 on provider failure, 2 on configuration or input errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

from .config import RunConfig
from .corpus_prep import (
    CoverageError,
    RelabelError,
    apply_labels,
    build_index,
    neighborhoods,
    read_triples,
    relabel_types,
    textualize_entity,
)
from .estimator import DotRAG, EntityDeduplicator
from .evaluate import EvalReport, load_ground_truth, resolve_chunks_to_nodes, score_retrieval, tally_pairs
from .graph_store import IndexLoadError, Schema, load_index, write_index
from .providers import ProviderError
from .validation import ConfigError

logger = logging.getLogger("dotrag")

EXIT_OK, EXIT_PROVIDER, EXIT_INPUT = 0, 1, 2

# flag dest -> RunConfig attribute
FLAG_FIELDS = {
    "index": "index",
    "mock_script": "mock_script",
    "hops": "h_max",
    "iterations": "t_max",
    "tau": "tau",
    "topk": "k_high",
    "cap": "cap",
    "paths_per_pair": "paths_per_pair",
    "candidates": "candidates",
    "chunks": "n_chunks",
    "parallel": "parallel",
    "seed": "seed",
}


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--index", help="graph index (newline-delimited JSON)")
    p.add_argument("--config", help="JSON file of dotted configuration keys")
    p.add_argument("--mock-script", help="scripted mock LLM rules (JSON); selects offline mode")
    p.add_argument("--trace", help="write the retrieval event log here (NDJSON)")
    p.add_argument("--hops", type=int, help="hop limit h_max")
    p.add_argument("--iterations", type=int, help="search rounds per workspace")
    p.add_argument("--tau", type=float, help="low-level grounding threshold")
    p.add_argument("--topk", type=int, help="anchors per high-level concept")
    p.add_argument("--cap", type=int, help="paths judged per round")
    p.add_argument("--paths-per-pair", type=int, help="shortest paths per anchor/destination pair")
    p.add_argument("--candidates", type=int, help="destinations retrieved per round")
    p.add_argument("--chunks", type=int, help="chunks passed to the answer prompt")
    p.add_argument("--parallel", type=int, help="worker threads")
    p.add_argument("--seed", type=int, help="mock embedder seed")
    p.add_argument("--verbose", "-v", action="store_true", help="log progress and the effective config")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="dotrag", description="Graph retrieval over workspaces of connected paths.")
    sub = parser.add_subparsers(dest="command", required=True)

    q = sub.add_parser("query", parents=[common], help="answer one question")
    q.add_argument("question")

    e = sub.add_parser("eval-retrieval", parents=[common], help="node-level recall/precision/F1")
    e.add_argument("ground_truth", nargs="?", help="NDJSON of query_id, question, start_entity, gold_entities")
    e.add_argument("--out", help="also write the JSON report here")

    j = sub.add_parser("judge", parents=[common], help="pairwise LLM judging with order swap")
    j.add_argument("answers_a")
    j.add_argument("answers_b")
    j.add_argument("--no-swap", action="store_true", help="judge each pair in one order only")

    prep = sub.add_parser("prep", help="corpus preparation")
    psub = prep.add_subparsers(dest="prep_command", required=True)
    for name, helptext in (
        ("textualize", "write bracket-marked articles for each entity of a triple file"),
        ("build-index", "triple file to a full index"),
        ("dedup", "merge duplicate entities of an index"),
        ("relabel", "reassign entity types of an index in batches"),
    ):
        sp = psub.add_parser(name, parents=[common], help=helptext)
        sp.add_argument("input")
        sp.add_argument("--out", required=True)
        if name in ("textualize", "build-index"):
            sp.add_argument("--schema", help="schema JSON (defaults to the bundled film schema)")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    overrides = {attr: getattr(args, dest, None) for dest, attr in FLAG_FIELDS.items()}
    if getattr(args, "schema", None):
        overrides["schema"] = args.schema
    return RunConfig.load(args.config, overrides)


def _load_schema(path: str | None) -> Schema:
    if path:
        text = Path(path).read_text(encoding="utf-8")
    else:
        text = resources.files("dotrag").joinpath("data/default_schema.json").read_text(encoding="utf-8")
    return Schema.from_record(json.loads(text))


def _require_index(cfg: RunConfig):
    if not cfg.index:
        raise ConfigError("index", "no index given (use --index or paths.index)")
    return load_index(cfg.index)


def _pipeline(cfg: RunConfig, index) -> DotRAG:
    pair = cfg.providers()
    return DotRAG(
        llm=pair.llm,
        embedder=pair.embedder,
        tau=cfg.tau,
        k_high=cfg.k_high,
        low_cap=cfg.low_cap,
        h_max=cfg.h_max,
        t_max=cfg.t_max,
        candidates=cfg.candidates,
        paths_per_pair=cfg.paths_per_pair,
        cap=cfg.cap,
        n_chunks=cfg.n_chunks,
        chunk_char_budget=cfg.chunk_char_budget,
        parallel=cfg.parallel,
        batch_judging=cfg.batch_judging,
        template_dir=cfg.template_dir,
    ).fit(index)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False)


def cmd_query(cfg: RunConfig, args, out) -> int:
    index = _require_index(cfg)
    result = _pipeline(cfg, index).retrieve(args.question)
    if args.trace:
        Path(args.trace).write_text(result.trace.to_ndjson(), encoding="utf-8")
    print(_dump(result.bundle.to_dict()), file=out)
    return EXIT_OK


def cmd_eval_retrieval(cfg: RunConfig, args, out) -> int:
    index = _require_index(cfg)
    gt_path = args.ground_truth or cfg.ground_truth
    if not gt_path:
        raise ConfigError("ground_truth", "no ground-truth file given")
    truths = load_ground_truth(gt_path, index)
    model = _pipeline(cfg, index)
    report = EvalReport()
    traces = []
    for gt in truths:
        result = model.retrieve(gt.question)
        resolved = resolve_chunks_to_nodes(result.retrieved_chunks, result.retrieved_nodes, index)
        report.add(gt.query_id, score_retrieval(resolved, gt.gold))
        traces.append(result.trace.to_ndjson())
    if args.trace:
        Path(args.trace).write_text("".join(traces), encoding="utf-8")
    payload = report.to_dict()
    if args.out:
        Path(args.out).write_text(_dump(payload) + "\n", encoding="utf-8")
    print(_dump(payload), file=out)
    print(report.to_table(), file=out)
    return EXIT_OK


def _read_answers(path: str) -> dict[str, tuple[str, str]]:
    answers = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            try:
                answers[str(rec["query_id"])] = (str(rec.get("question", "")), str(rec["answer"]))
            except KeyError as exc:
                raise ConfigError("answers", f"{path}:{line_no}: missing field {exc}") from None
    if not answers:
        raise ConfigError("answers", f"{path}: no answers")
    return answers


def cmd_judge(cfg: RunConfig, args, out) -> int:
    a, b = _read_answers(args.answers_a), _read_answers(args.answers_b)
    if set(a) != set(b):
        raise ConfigError("answers", f"query ids differ between files: {sorted(set(a) ^ set(b))}")
    pairs = [(a[qid][0] or b[qid][0], a[qid][1], b[qid][1]) for qid in sorted(a)]
    llm = cfg.providers().llm
    tally = tally_pairs(pairs, llm, swap=not args.no_swap, template_dir=cfg.template_dir)
    print(_dump(tally.to_dict()), file=out)
    print(tally.to_table(), file=out)
    return EXIT_OK


def _write_json(path: Path, obj) -> None:
    path.write_text(_dump(obj) + "\n", encoding="utf-8")


def _sidecar(out: Path, suffix: str) -> Path:
    return out.with_name(out.name + suffix)


def cmd_prep(cfg: RunConfig, args, out) -> int:
    target = Path(args.out)
    pair = cfg.providers()
    progress = lambda stage, done, total: logger.info("%s: %d/%d", stage, done, total)  # noqa: E731

    if args.prep_command == "textualize":
        hoods = neighborhoods(read_triples(args.input))
        failures, lines = [], []
        for i, (name, triples) in enumerate(hoods.items(), start=1):
            try:
                mc = textualize_entity(name, triples, pair.llm, cfg.max_retries, cfg.template_dir)
                lines.append({"center": mc.center, "text": mc.text, "required_entities": list(mc.required_entities),
                              "attempts": mc.attempts})
            except CoverageError as err:
                failures.append(err.record())
            if i % 100 == 0:
                progress("textualize", i, len(hoods))
        target.write_text("".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in lines),
                          encoding="utf-8")
        _write_json(_sidecar(target, ".failures.json"), failures)
        print(_dump({"written": len(lines), "failures": len(failures)}), file=out)
        return EXIT_OK

    if args.prep_command == "build-index":
        schema = _load_schema(cfg.schema)
        triples = read_triples(args.input)
        index, report = build_index(triples, schema, pair.llm, pair.embedder, cfg.max_retries, cfg.parallel,
                                    cfg.template_dir, progress)
        write_index(index, target)
        _write_json(_sidecar(target, ".failures.json"), report.failures)
        print(_dump({"entities": len(index.entities), "relations": len(index.relations),
                     "chunks": len(index.chunks), "failures": len(report.failures)}), file=out)
        return EXIT_OK

    index = load_index(args.input)
    if args.prep_command == "dedup":
        dedup = EntityDeduplicator(pair.llm, cfg.tau_dedup, cfg.parallel, cfg.template_dir).fit(index)
        merged = dedup.transform(index)
        write_index(merged, target)
        report = dedup.report()
        _write_json(_sidecar(target, ".merge.json"), report)
        print(_dump({"entities_before": len(index.entities), "entities_after": len(merged.entities),
                     "merged_clusters": len(report["merged"])}), file=out)
        return EXIT_OK

    # relabel
    entities = [index.entities[k] for k in sorted(index.entities)]
    labels = relabel_types(entities, index.schema, pair.llm, cfg.batch_size, workers=cfg.parallel,
                           template_dir=cfg.template_dir)
    write_index(apply_labels(index, labels), target)
    changed = [{"id": eid, "from": index.entities[eid].entity_type, "to": lab}
               for eid, lab in labels if lab != index.entities[eid].entity_type]
    _write_json(_sidecar(target, ".relabel.json"), {"decisions": len(labels), "changed": changed})
    print(_dump({"decisions": len(labels), "changed": len(changed)}), file=out)
    return EXIT_OK


COMMANDS = {"query": cmd_query, "eval-retrieval": cmd_eval_retrieval, "judge": cmd_judge, "prep": cmd_prep}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = resolve_config(args)
        if args.verbose:
            logger.info("config: %s", json.dumps(cfg.redacted(), sort_keys=True))
        return COMMANDS[args.command](cfg, args, out)
    except (ConfigError, IndexLoadError, FileNotFoundError, ValueError) as exc:
        print(f"dotrag: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ProviderError, RelabelError) as exc:
        print(f"dotrag: provider failure: {exc}", file=sys.stderr)
        if getattr(exc, "raw", None):
            print(f"raw response:\n{exc.raw}", file=sys.stderr)
        return EXIT_PROVIDER


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
