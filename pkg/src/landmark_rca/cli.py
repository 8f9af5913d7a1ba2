"""Command-line front end: gen | train | transfer | diagnose | bench | report.

Exit codes: 0 on success, 1 for usage problems, 2 for data or contract
errors (bad files, schema mismatches, impossible requests).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .bayes import BayesModel, fit_bayes
from .errors import DataError
from .evaluation import Protocol, run_benchmark, split_hidden
from .forest import ForestModel, ForestParams, train_forest
from .inference import diagnose
from .landpool import CoarseModel, TrainConfig, train, transfer
from .schema import Sample
from .simnet import Dataset, SimConfig, default_config, generate_dataset


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; the contract reserves 2
    # for data errors, so usage problems are rerouted through exit code 1.
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="landmark-rca", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("gen", help="generate a synthetic fault dataset")
    p.add_argument("--config", help="simulator config (.json or .toml); omit for the benchmark default")
    p.add_argument("--out", required=True, help="dataset file to write")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("train", help="train a model on a dataset's train split")
    p.add_argument("--data", required=True, help="dataset file")
    p.add_argument("--model", required=True, choices=("diagnet", "forest", "bayes"))
    p.add_argument("--out", required=True, help="model container to write")
    p.add_argument("--hidden", help="comma-separated landmark ids to hide during training")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, help="diagnet epoch cap")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("transfer", help="specialize a coarse model for one service")
    p.add_argument("--model", required=True, help="general coarse model container")
    p.add_argument("--data", required=True, help="dataset file")
    p.add_argument("--service", required=True, help="service id to specialize for")
    p.add_argument("--out", required=True, help="model container to write")
    p.add_argument("--hidden", help="comma-separated landmark ids to hide, as in train")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=15)
    p.set_defaults(func=_cmd_transfer)

    p = sub.add_parser("diagnose", help="rank root causes for one observation")
    p.add_argument("--model", required=True, help="coarse model container")
    p.add_argument("--aux", help="forest container; omitted = attention-only mode")
    p.add_argument("--sample", required=True, help="sample JSON file")
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("bench", help="run the hidden-landmark benchmark")
    p.add_argument("--protocol", required=True, help="protocol file (.json or .toml)")
    p.add_argument("--out", required=True, help="directory for report.json and CSV tables")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("report", help="summarize a benchmark report directory")
    p.add_argument("--dir", required=True, help="directory holding report.json")
    p.set_defaults(func=_cmd_report)

    return parser


def _parse_hidden(dataset: Dataset, flag: str | None) -> tuple[str, ...]:
    if not flag:
        return ()
    hidden = tuple(part.strip() for part in flag.split(",") if part.strip())
    for lid in hidden:
        dataset.schema.landmark_index(lid)  # raises DataError naming the id
    return hidden


def _train_view(dataset: Dataset, hidden: tuple[str, ...]) -> Dataset:
    if hidden:
        view, _ = split_hidden(dataset, hidden)
        return view
    return dataset.train_view()


def _cmd_gen(args) -> int:
    cfg = SimConfig.from_file(args.config) if args.config else default_config()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    dataset = generate_dataset(cfg)
    dataset.save(args.out)
    print(f"wrote {len(dataset)} samples to {args.out}")
    return 0


def _cmd_train(args) -> int:
    dataset = Dataset.load(args.data)
    view = _train_view(dataset, _parse_hidden(dataset, args.hidden))
    if args.model == "diagnet":
        cfg = TrainConfig(seed=args.seed)
        if args.epochs is not None:
            cfg = replace(cfg, max_epochs=args.epochs)
        train(view, cfg).save(args.out)
    elif args.model == "forest":
        train_forest(view, ForestParams(seed=args.seed)).save(args.out)
    else:
        fit_bayes(view).save(args.out)
    print(f"wrote {args.model} model to {args.out}")
    return 0


def _cmd_transfer(args) -> int:
    general = CoarseModel.load(args.model)
    dataset = Dataset.load(args.data)
    view = _train_view(dataset, _parse_hidden(dataset, args.hidden))
    mask = view.service_ids == args.service
    if not mask.any():
        raise DataError(f"service {args.service!r} has no rows in the dataset")
    cfg = TrainConfig(seed=args.seed, max_epochs=args.epochs)
    model = transfer(general, view.subset(mask), cfg)
    model.save(args.out)
    print(
        f"wrote service model for {args.service} to {args.out} "
        f"(best epoch {model.best_epoch})"
    )
    return 0


def _cmd_diagnose(args) -> int:
    coarse = CoarseModel.load(args.model)
    aux = ForestModel.load(args.aux) if args.aux else None
    with open(args.sample) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{args.sample}: not valid JSON: {exc}") from exc
    digest = doc.get("schema_digest")
    if digest is not None and digest != coarse.schema.digest():
        raise DataError("sample schema digest does not match the model's")
    sample = Sample.from_json(doc)
    sample.validate(coarse.schema)
    print(diagnose(coarse, aux, sample).to_json(coarse.schema))
    return 0


def _cmd_bench(args) -> int:
    protocol = Protocol.from_file(args.protocol)
    report = run_benchmark(protocol)
    report.save(args.out)
    print(f"wrote report.json and CSV tables to {args.out}")
    return 0


def _cmd_report(args) -> int:
    import os

    path = os.path.join(args.dir, "report.json")
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON: {exc}") from exc
    print(f"{'model':<10}{'cohort':<10}" + "".join(f"R@{k:<6}" for k in (1, 3, 5, 10)))
    for model in sorted(doc["recalls"]):
        for cohort in ("new", "known", "combined"):
            cell = doc["recalls"][model].get(cohort, {})
            vals = []
            for k in ("1", "3", "5", "10"):
                e = cell.get(k)
                vals.append("--      " if e is None or e["recall"] is None else f"{e['recall']:<8.3f}")
            print(f"{model:<10}{cohort:<10}" + "".join(vals))
    got = doc["recalls"].get("diagnet", {}).get("combined", {}).get("1", {})
    if got and got.get("recall") is not None:
        print(
            f"DiagNet combined Recall@1: {got['recall']:.3f} "
            f"(deployment reference {doc.get('reference_recall_at_1', 0.739):.3f})"
        )
    med = doc.get("transfer", {}).get("median_epochs_to_best")
    if med is not None:
        print(f"transfer median epochs to best: {med}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    if getattr(args, "func", None) is None:
        parser.print_help(sys.stderr)
        return 1
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
