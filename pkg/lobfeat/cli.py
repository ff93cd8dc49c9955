#!/usr/bin/env python3
"""
lobfeat - Command line interface

    lobfeat extract  --messages m.csv --book b.csv [--messages ... --book ...] --out features.bin
    lobfeat rank     --features features.bin (--labels labels.csv | --horizon H) --method lda1 [--train-days 1] --out r.json
    lobfeat evaluate --features features.bin --ranking r.json --classifier rbfn --horizon 1 --topk 50
    lobfeat protocol --features features.bin --out runs/protocol.json
    lobfeat report   --runs runs --format md
    lobfeat synth    --days 5 --seed 7 --out data
    lobfeat serve

Global options (--config, --seed, --log-level) go before the subcommand.
Library errors are logged and end the process with status 2.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from .classify import CLASSIFIERS
from .config import LobfeatConfig, config_hash, get_config, with_seed
from .errors import LobfeatError, ValidationError
from .extraction import POOLS, extract_features, pool_stocks, summarize
from .lob_core import parse_book_file, parse_message_file
from .pipeline import METRICS, DayData, ProtocolReport, evaluate_ranking, rank_training_days, run_protocol
from .selection import METHODS, RankingList
from .storage import read_artifact, read_features, read_labels, write_artifact, write_features
from .synth import write_synthetic_days

logger = logging.getLogger("lobfeat")

EXIT_FAILURE = 2
REPORT_KINDS = ("metrics", "protocol")


def _labels(args, matrix, config: LobfeatConfig) -> np.ndarray:
    if args.labels:
        labels = read_labels(args.labels)
        if len(labels) != matrix.n_samples:
            raise ValidationError(f"{args.labels} has {len(labels)} labels, features have {matrix.n_samples} samples")
        return labels
    return DayData(matrix).labels_for(args.horizon, config)


def cmd_extract(args, config: LobfeatConfig) -> int:
    if len(args.messages) != len(args.book):
        raise ValidationError(f"got {len(args.messages)} message files but {len(args.book)} book files")
    matrices = []
    for stock, (messages_path, book_path) in enumerate(zip(args.messages, args.book)):
        events = parse_message_file(messages_path)
        book = parse_book_file(book_path, config.book.levels)
        matrices.append(extract_features(events, book, config, stock=stock))
    matrix = pool_stocks(matrices)
    write_features(args.out, matrix, config_hash(config))
    print(json.dumps(summarize(matrix), indent=2))
    return 0


def cmd_rank(args, config: LobfeatConfig) -> int:
    matrix = read_features(args.features)
    labels = _labels(args, matrix, config)
    ranking = rank_training_days(matrix, labels, args.method, config, args.pool, args.train_days)
    write_artifact(args.out, "ranking", ranking.to_dict(), config_hash(config))
    names = [matrix.manifest[i].name for i in ranking.top(10)]
    logger.info(f"Top features by {args.method}: {', '.join(names)}")
    return 0


def cmd_evaluate(args, config: LobfeatConfig) -> int:
    matrix = read_features(args.features)
    ranking = RankingList.from_dict(read_artifact(args.ranking, "ranking"))
    data = DayData(matrix, {args.horizon: _labels(args, matrix, config)})
    result = evaluate_ranking(data, ranking, args.classifier, args.horizon, args.topk, config)

    digest = config_hash(config)
    out = Path(args.out or f"runs/metrics_{ranking.method}_{args.classifier}_h{args.horizon}_d{args.topk}.json")
    frame = result.frame()
    summary = {m: float(frame[m].mean()) for m in METRICS} if not frame.empty else {}
    write_artifact(out, "metrics", {"rows": result.rows, "failed_folds": result.failed_folds,
                                    "summary": summary}, digest)
    if args.save_model:
        if result.last_model is None:
            raise ValidationError("no fold completed, nothing to save")
        write_artifact(args.save_model, "model", result.last_model.to_dict(), digest)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_protocol(args, config: LobfeatConfig) -> int:
    matrix = read_features(args.features)
    report = run_protocol(DayData(matrix), config)
    payload = report.to_dict()
    payload["slices"] = report.slices(config.protocol.feature_counts).to_dict(orient="records")
    payload["curves"] = report.curves().to_dict(orient="records")
    write_artifact(args.out, "protocol", payload, report.config_hash)
    if not report.rows:
        raise ValidationError(f"every fold failed ({len(report.failed_folds)} failures)")
    print(report.best_rows().to_string(index=False))
    return 0


def collect_runs(runs_dir) -> ProtocolReport:
    """Merge the metric rows of every metrics/protocol artifact under a directory"""
    runs_dir = Path(runs_dir)
    if not runs_dir.is_dir():
        raise ValidationError(f"runs directory not found: {runs_dir}")
    report = ProtocolReport()
    for path in sorted(runs_dir.glob("*.json")):
        document = read_artifact(path)
        if document["kind"] not in REPORT_KINDS:
            continue
        report.rows.extend(document.get("rows", []))
        report.failed_folds.extend(document.get("failed_folds", []))
    return report


def render_report(report: ProtocolReport, fmt: str) -> str:
    summary = report.summary()
    if fmt == "json":
        return json.dumps({"summary": summary.to_dict(orient="records"),
                           "best": report.best_rows().to_dict(orient="records"),
                           "failed_folds": report.failed_folds}, indent=2)
    if fmt == "csv":
        return summary.to_csv(index=False)
    if fmt == "md":
        if summary.empty:
            return "_no completed runs_\n"
        return summary.to_markdown(index=False, floatfmt=".4f") + "\n"
    raise ValidationError(f"Unknown report format: {fmt}")


def cmd_report(args, config: LobfeatConfig) -> int:
    text = render_report(collect_runs(args.runs), args.format)
    if args.out:
        Path(args.out).write_text(text)
        logger.info(f"Report written to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_synth(args, config: LobfeatConfig) -> int:
    seed = config.seed if args.synth_seed is None else args.synth_seed
    paths = write_synthetic_days(args.out, args.days, args.events, config.book.levels, seed)
    for messages_path, book_path in paths:
        print(f"{messages_path} {book_path}")
    return 0


def cmd_serve(args, config: LobfeatConfig) -> int:
    import uvicorn

    from .server import create_app

    uvicorn.run(create_app(config), host=args.host or config.server.host, port=args.port or config.server.port,
                log_level=config.server.log_level)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lobfeat", description="Limit order book feature extraction and ranking")
    parser.add_argument("--config", help="TOML config file")
    parser.add_argument("--seed", type=int, help="Override the configured random seed")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="Extract the feature matrix from message/book CSV pairs")
    p.add_argument("--messages", action="append", required=True, help="Message CSV (repeat per stock)")
    p.add_argument("--book", action="append", required=True, help="Order book CSV (repeat per stock)")
    p.add_argument("--out", default="features.bin")
    p.set_defaults(handler=cmd_extract)

    p = sub.add_parser("rank", help="Rank features with a wrapper criterion")
    p.add_argument("--features", required=True)
    labels = p.add_mutually_exclusive_group(required=True)
    labels.add_argument("--labels", help="CSV with one 'label' column")
    labels.add_argument("--horizon", type=int, help="Derive labels from the mids at this horizon")
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--pool", choices=POOLS, default="all")
    p.add_argument("--train-days", type=int, default=1, help="Rank on the first N days only (default: fold 1)")
    p.add_argument("--out", default="ranking.json")
    p.set_defaults(handler=cmd_rank)

    p = sub.add_parser("evaluate", help="Anchored cross-validation of a classifier on a ranking's top features")
    p.add_argument("--features", required=True)
    p.add_argument("--ranking", required=True)
    p.add_argument("--labels", help="CSV with one 'label' column (default: derived from the mids)")
    p.add_argument("--classifier", choices=CLASSIFIERS, required=True)
    p.add_argument("--horizon", type=int, default=1)
    p.add_argument("--topk", type=int, required=True)
    p.add_argument("--out", help="Metrics JSON (default: runs/metrics_<method>_<classifier>_h<H>_d<k>.json)")
    p.add_argument("--save-model", help="Write the last fold's model snapshot here")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("protocol", help="Full protocol over every horizon, method, classifier and d")
    p.add_argument("--features", required=True)
    p.add_argument("--out", default="runs/protocol.json")
    p.set_defaults(handler=cmd_protocol)

    p = sub.add_parser("report", help="Summarize the metrics found in a runs directory")
    p.add_argument("--runs", default="runs")
    p.add_argument("--format", choices=("json", "csv", "md"), default="md")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_report)

    p = sub.add_parser("synth", help="Write synthetic message/book CSVs")
    p.add_argument("--days", type=int, default=3)
    p.add_argument("--events", type=int, default=2000, help="Events per day")
    p.add_argument("--seed", type=int, dest="synth_seed", help="Seed for this run (default: the configured seed)")
    p.add_argument("--out", default="data")
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("serve", help="Start the report service")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.set_defaults(handler=cmd_serve)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = with_seed(get_config(args.config), args.seed)
    except LobfeatError as e:
        logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
        logger.error(f"Configuration error: {e}")
        return EXIT_FAILURE

    level = (args.log_level or config.server.log_level).upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    try:
        return args.handler(args, config)
    except LobfeatError as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
