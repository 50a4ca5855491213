"""Command-line entry point: ingest -> embed -> run -> eval, staged on disk.

Each stage reads the previous stage's files under the configured workdir, so
expensive generation runs are resumable and auditable. Exit codes: 0 ok,
1 usage error, 2 data error, 3 backend error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import evaluation as ev
from . import retrieval, strategies
from .config import ConfigError, RunConfig, load_config
from .embedder import EmbedderError, ServiceEmbedder, StubEmbedder
from .gateway import (CassetteBackend, GatewayError, GenerationParams,
                      HttpChatBackend)
from .mockllm import DeterministicMockBackend
from .prompts import load_templates
from .retrieval import EmbeddingMatrix, ItemIndex, RetrievalError, SequenceIndex

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BACKEND = 3


def _make_embedder(cfg: RunConfig):
    if cfg.embedding.source == "stub":
        return StubEmbedder(dim=cfg.embedding.dim)
    if cfg.embedding.source == "service":
        return ServiceEmbedder(cfg.embedding.url)
    return None  # files: vectors exist, no query embedder available


def _make_backend(cfg: RunConfig):
    gw = cfg.gateway
    if gw.backend == "mock":
        return DeterministicMockBackend()
    if gw.backend == "cassette":
        return CassetteBackend(Path(gw.cassette), strict=gw.strict)
    return HttpChatBackend(gw.url, model=gw.model, token=cfg.gateway_token(),
                           max_retries=gw.max_retries, timeout=gw.timeout,
                           max_concurrency=gw.max_concurrency)


def cmd_ingest(cfg: RunConfig) -> int:
    d = cfg.dataset
    if d.reviews is None:
        print("error: dataset.reviews path is not configured", file=sys.stderr)
        return EXIT_USAGE
    if not Path(d.reviews).exists():
        print(f"error: review file not found: {d.reviews}", file=sys.stderr)
        return EXIT_DATA
    result = ds.ingest(d.reviews, d.field_map or None)
    filtered = ds.filter_corpus(result.interactions, d.min_item_freq,
                                d.min_user_len, d.max_user_len)
    sampled = ds.sample_users(filtered, d.sample_size, d.sample_seed)
    kept = [i for i in filtered if i.user in sampled]
    split = ds.split(kept)
    cfg.workdir.mkdir(parents=True, exist_ok=True)
    ds.save_manifest(split, cfg.manifest_path)
    stats = ds.corpus_stats(kept)
    print(f"users={stats['users']} items={stats['items']} "
          f"actions={stats['actions']}")
    if result.skipped:
        print(f"skipped {result.skipped} malformed lines")
    print(f"wrote {cfg.manifest_path}")
    return EXIT_OK


def cmd_embed(cfg: RunConfig, force: bool = False) -> int:
    if cfg.embedding.source == "files":
        # Vectors are externally supplied; just validate they load.
        retrieval.load_vectors(cfg.item_vectors_path)
        retrieval.load_vectors(cfg.sequence_vectors_path)
        print("using externally supplied vector files")
        return EXIT_OK
    embedder = _make_embedder(cfg)
    split = ds.load_manifest(cfg.manifest_path)

    titles_by_item: dict[str, str] = {}
    for i in ds.all_interactions(split):
        titles_by_item.setdefault(i.item, i.title)
    item_ids = sorted(titles_by_item)
    vectors = embedder.embed_many([titles_by_item[i] for i in item_ids])

    if cfg.item_vectors_path.exists() and not force:
        existing = retrieval.load_vectors(cfg.item_vectors_path)
        if existing.dim != vectors.shape[1]:
            print(f"error: existing vectors have dim {existing.dim}, new ones "
                  f"{vectors.shape[1]}; pass --force to overwrite",
                  file=sys.stderr)
            return EXIT_DATA
    items = EmbeddingMatrix(ids=item_ids, vectors=vectors)
    retrieval.save_vectors(items, cfg.item_vectors_path)

    by_id = {item: vectors[n] for n, item in enumerate(item_ids)}
    seq_ids = sorted(split.users)
    seq_vectors = np.stack([
        retrieval.embed_sequence([by_id[i.item] for i in
                                  split.users[u].input_interactions()])
        for u in seq_ids])
    retrieval.save_vectors(EmbeddingMatrix(ids=seq_ids, vectors=seq_vectors),
                           cfg.sequence_vectors_path)
    print(f"wrote {cfg.item_vectors_path} ({len(item_ids)}x{vectors.shape[1]}) "
          f"and {cfg.sequence_vectors_path} ({len(seq_ids)}x{vectors.shape[1]})")
    return EXIT_OK


def cmd_run(cfg: RunConfig) -> int:
    split = ds.load_manifest(cfg.manifest_path)
    seq_matrix = retrieval.load_vectors(cfg.sequence_vectors_path)
    seq_index = SequenceIndex(seq_matrix)
    seq_vec_by_user = {uid: seq_matrix.vectors[n]
                       for n, uid in enumerate(seq_matrix.ids)}
    neighbor_titles = {
        uid: [i.title for i in s.input_interactions()]
        for uid, s in split.users.items()
    }
    engine = strategies.StrategyEngine(
        backend=_make_backend(cfg), templates=load_templates(),
        params=GenerationParams(), config=cfg.strategy)
    cfg.run_dir.mkdir(parents=True, exist_ok=True)

    done = skipped = failed = 0
    for uid in sorted(split.users):
        out_path = cfg.run_dir / f"{uid}.json"
        if out_path.exists():
            skipped += 1
            continue
        titles = neighbor_titles[uid]
        record = engine.run(uid, titles,
                            sequence_index=seq_index,
                            query_vector=seq_vec_by_user.get(uid),
                            neighbor_titles=neighbor_titles) \
            if cfg.strategy.strategy == "got" else engine.run(uid, titles)
        strategies.save_run_record(record, out_path)
        done += 1
        failed += int(record.failed)
        if done % 50 == 0:
            print(f"completed {done} users ({engine.llm_calls} LLM calls)")
    print(f"runs complete: {done} new, {skipped} already present, "
          f"{failed} failed, {engine.llm_calls} LLM calls")
    return EXIT_OK


def _eval_one_dir(cfg: RunConfig, run_dir: Path, split, item_index, embedder):
    ranked, failed = [], 0
    for path in sorted(run_dir.glob("*.json")):
        payload = strategies.load_run_payload(path)
        if payload.get("failed") or not payload.get("final"):
            failed += 1
            continue
        ranked.append(ev.ground(payload["final"], item_index,
                                embedder.embed_one, payload["user"],
                                cfg.evaluation.ground_k))
    if not ranked:
        raise ev.EvaluationError(f"no successful runs in {run_dir}")
    test_items = {u: s.test.item for u, s in split.users.items()}
    popularity = ds.train_popularity(split)
    report = ev.evaluate(ranked, test_items, popularity,
                         user_count=len(split.users),
                         cutoffs=cfg.evaluation.cutoffs, failed_runs=failed)
    return report, ranked, popularity


def cmd_eval(cfg: RunConfig, run_dirs: list[Path], popularity_flag: bool) -> int:
    split = ds.load_manifest(cfg.manifest_path)
    item_index = ItemIndex(retrieval.load_vectors(cfg.item_vectors_path))
    embedder = _make_embedder(cfg)
    if embedder is None:
        print("error: evaluation needs a stub or service embedding source to "
              "ground generated titles", file=sys.stderr)
        return EXIT_DATA
    dirs = run_dirs or [cfg.run_dir]
    reports = []
    all_ranked = []
    popularity = None
    for run_dir in dirs:
        if not Path(run_dir).exists():
            print(f"error: run directory not found: {run_dir}", file=sys.stderr)
            return EXIT_DATA
        report, ranked, popularity = _eval_one_dir(cfg, Path(run_dir), split,
                                                   item_index, embedder)
        reports.append(report)
        all_ranked.extend(ranked)
    merged = reports[0] if len(reports) == 1 else ev.average_reports(reports)
    cfg.workdir.mkdir(parents=True, exist_ok=True)
    report_path = cfg.workdir / "report.json"
    report_path.write_text(ev.report_to_json(merged), encoding="utf-8")
    print(ev.report_table(merged))
    print(f"wrote {report_path}")
    if popularity_flag or cfg.evaluation.popularity:
        rows = ev.popularity_report(all_ranked, popularity)
        pop_path = cfg.workdir / "popularity.jsonl"
        ev.save_popularity_report(rows, pop_path)
        print(f"wrote {pop_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphrec",
        description="Graph-of-thoughts recommendation pipeline")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("ingest", "embed", "run", "eval"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path)
        if name == "embed":
            p.add_argument("--force", action="store_true",
                           help="overwrite vector files on dimension change")
        if name == "eval":
            p.add_argument("run_dirs", nargs="*", type=Path,
                           help="run-record directories (default: configured)")
            p.add_argument("--popularity", action="store_true",
                           help="emit the per-item frequency data file")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "ingest":
            return cmd_ingest(cfg)
        if args.command == "embed":
            return cmd_embed(cfg, force=args.force)
        if args.command == "run":
            return cmd_run(cfg)
        return cmd_eval(cfg, list(args.run_dirs), args.popularity)
    except (ds.DatasetError, RetrievalError, ev.EvaluationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (GatewayError, EmbedderError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BACKEND


if __name__ == "__main__":
    sys.exit(main())
