"""Command-line entry points: train, eval, sample-tiny, stats, predict.

Every RunConfig key is also a flag of the same name (``--lr 0.001``). All
files are written under ``--out``. Exit codes: 0 ok, 2 configuration error,
3 data error, 4 numeric abort, 5 checkpoint mismatch.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import tensor as T
from .checkpoint import check_compatible, load_checkpoint, save_checkpoint
from .config import RunConfig, load_config, parse_value
from .data import UNKNOWN_USER, Corpus, raw_behaviors_row, raw_news_row
from .errors import ConfigError, DataError, NewsrecError
from .metrics import prediction_jsonl, prediction_lines
from .mindtiny import dataset_stats, sample_mindtiny, write_stats
from .pipeline import (build_model, load_datasets, model_from_checkpoint, parse_behaviors,
                       parse_news_files)
from .training import evaluate, train, write_metrics_csv

log = logging.getLogger("newsrec")

CONFIG_KEYS = [f.name for f in fields(RunConfig)]


def _report_dict(report) -> dict:
    d = asdict(report)
    d["path"] = Path(report.path).name
    d["errors"] = d["errors"][:20]
    return d


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _write_eval(out: Path, stem: str, report, scored) -> None:
    (out / f"{stem}_report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    (out / f"{stem}_predictions.txt").write_text(
        "".join(line + "\n" for line in prediction_lines(scored)), encoding="utf-8")
    (out / f"{stem}_scores.jsonl").write_text(
        "".join(line + "\n" for line in prediction_jsonl(scored)), encoding="utf-8")


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ------------------------------------------------------------------ commands


def cmd_train(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    (out / "config.ini").write_text(cfg.to_ini(), encoding="utf-8")
    data = load_datasets(cfg)
    _write_json(out / "data_report.json",
                {name: _report_dict(r) for name, r in sorted(data.reports.items(),
                                                             key=lambda kv: Path(kv[0]).name)})
    model = build_model(cfg, data.corpus)
    common = dict(config=asdict(cfg), config_hash=cfg.model_hash(), corpus=data.corpus)
    ckpt_dir = out / "checkpoints"

    def on_epoch(result, model, adam, rng):
        metrics = result.val.metrics if result.val else {}
        save_checkpoint(ckpt_dir / f"epoch_{result.epoch:03d}.ckpt", model.store,
                        epoch=result.epoch, rng_state=rng.get_state(), metrics=metrics, **common)

    result = train(model, data.train, cfg.train_config(), data.val, on_epoch,
                   timing_path=out / "timing.csv")
    write_metrics_csv(out / "metrics.csv", result)
    model.store.load_state_dict(result.best_state)
    best = result.epochs[result.best_epoch - 1]
    save_checkpoint(ckpt_dir / "best.ckpt", model.store, epoch=result.best_epoch,
                    rng_state=result.rng_state, metrics=best.val.metrics if best.val else {},
                    **common)
    split, imps = ("val", data.val) if data.val else ("train", data.train)
    meta = {"split": split, "epoch": result.best_epoch, "config_hash": cfg.model_hash()}
    report, scored = evaluate(model, imps, cfg.eval_batch_size, meta)
    _write_eval(out, split, report, scored)
    if data.test:
        report, scored = evaluate(model, data.test, cfg.eval_batch_size,
                                  dict(meta, split="test"))
        _write_eval(out, "test", report, scored)
    print(f"best epoch {result.best_epoch}: " +
          " ".join(f"{k}={v:.4f}" for k, v in report.metrics.items()))
    return 0


def _checkpoint_config(args, overrides: dict) -> tuple[RunConfig, object]:
    """Config for eval/predict: the given file, else the checkpoint's own config.

    Overrides apply either way; the result must hash like the checkpoint.
    """
    if not args.checkpoint:
        raise DataError("--checkpoint is required")
    ckpt = load_checkpoint(args.checkpoint)
    if args.config:
        cfg = load_config(args.config, overrides)
    else:
        values = dict(ckpt.config)
        values.update({key: parse_value(key, raw) for key, raw in overrides.items()
                       if key in values})
        unknown = set(overrides) - set(values)
        if unknown:
            raise ConfigError(f"unknown config key {sorted(unknown)[0]!r}")
        cfg = RunConfig(**values)
        cfg.validate()
    check_compatible(ckpt, cfg.model_hash(), args.checkpoint)
    return cfg, ckpt


def _eval_corpus(cfg: RunConfig, ckpt, reports: dict) -> Corpus:
    corpus = ckpt.restore_corpus()
    parse_news_files(corpus, cfg.news, reports)
    return corpus


def cmd_eval(cfg: RunConfig, args, ckpt) -> int:
    out = _out_dir(cfg)
    behaviors = args.behaviors or cfg.test_behaviors or cfg.val_behaviors
    if not behaviors:
        raise DataError("no behaviors file: pass --behaviors")
    reports: dict = {}
    corpus = _eval_corpus(cfg, ckpt, reports)
    imps = parse_behaviors(corpus, behaviors, cfg.history_max, reports)
    model = model_from_checkpoint(ckpt, corpus)
    meta = {"split": Path(behaviors).name, "epoch": ckpt.epoch, "config_hash": ckpt.config_hash}
    report, scored = evaluate(model, imps, cfg.eval_batch_size, meta)
    _write_eval(out, "eval", report, scored)
    print(" ".join(f"{k}={v:.4f}" for k, v in report.metrics.items()))
    return 0


def _read_ids(path: str, what: str) -> list[str]:
    try:
        return Path(path).read_text(encoding="utf-8").split()
    except OSError as exc:
        raise DataError(f"cannot read {what} file {path}: {exc.strerror}") from None


def cmd_predict(cfg: RunConfig, args, ckpt) -> int:
    out = _out_dir(cfg)
    if not args.candidates:
        raise DataError("--candidates is required")
    corpus = _eval_corpus(cfg, ckpt, {})
    history = _read_ids(args.history, "history") if args.history else []
    candidates = _read_ids(args.candidates, "candidate")
    if not candidates:
        raise DataError(f"{args.candidates}: no candidate ids")
    unknown = sorted({n for n in history + candidates if n not in corpus.news_index})
    if unknown:
        raise DataError(f"unknown news ids: {' '.join(unknown)}")
    model = model_from_checkpoint(ckpt, corpus)
    hist_idx = [corpus.news_index[n] for n in history][-cfg.history_max:]
    cand_idx = [corpus.news_index[n] for n in candidates]
    uid = corpus.users.get(args.user, grow=False) if args.user else None
    with T.no_grad():
        vectors = model.encode_all_news()
        mask = np.ones((1, max(1, len(hist_idx))), dtype=bool)
        hist = np.zeros(mask.shape, dtype=np.int64)
        if hist_idx:
            hist[0, :] = hist_idx
        else:
            mask[:] = False
        scores, _ = model.score_vectors(np.array([UNKNOWN_USER if uid is None else uid]),
                                        T.Tensor(vectors[hist]), mask,
                                        T.Tensor(vectors[np.array([cand_idx])]))
    values = [float(s) for s in scores.data[0]]
    order = sorted(range(len(values)), key=lambda i: -values[i])[:max(1, args.top_k)]
    rows = []
    for rank, i in enumerate(order, 1):
        a = corpus.news[cand_idx[i]]
        rows.append([str(rank), a.news_id, a.category, a.title, f"{values[i]:.6f}"])
    header = ["rank", "news_id", "category", "title", "score"]
    (out / "topk.tsv").write_text("".join("\t".join(r) + "\n" for r in [header, *rows]),
                                  encoding="utf-8")
    widths = [max(len(r[c]) for r in [header, *rows]) for c in range(4)]
    for r in [header, *rows]:
        print("  ".join(r[c].ljust(widths[c]) for c in range(4)) + "  " + r[4])
    return 0


def cmd_sample_tiny(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    behaviors = args.behaviors or cfg.train_behaviors
    if not behaviors:
        raise DataError("no behaviors file: pass --behaviors")
    corpus = Corpus(cfg.title_max, cfg.abstract_max)
    reports: dict = {}
    parse_news_files(corpus, cfg.news, reports)
    # keep whole histories: every click counts towards the thresholds
    imps = parse_behaviors(corpus, behaviors, sys.maxsize, reports)
    tiny = sample_mindtiny(imps, corpus.news, cfg.min_user_clicks, cfg.min_news_clicks)
    ids = [a.news_id for a in corpus.news]
    (out / "news.tsv").write_text("".join(raw_news_row(corpus.news[n]) + "\n" for n in tiny.news),
                                  encoding="utf-8")
    (out / "behaviors.tsv").write_text(
        "".join(raw_behaviors_row(imp, corpus, ids) + "\n" for imp in tiny.behaviors),
        encoding="utf-8")
    with open(out / "news_clicks.csv", "w", encoding="utf-8") as fh:
        fh.write("news_id,clicks\n")
        fh.writelines(f"{ids[n]},{tiny.news_clicks[n]}\n" for n in tiny.news)
    write_stats(dataset_stats(corpus, [corpus.news[n] for n in tiny.news], tiny.behaviors), out)
    print(f"kept {len(tiny.users)} users, {len(tiny.news)} news, "
          f"{len(tiny.behaviors)} impressions ({tiny.rounds} filter rounds)")
    return 0


def cmd_stats(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    corpus = Corpus(cfg.title_max, cfg.abstract_max)
    reports: dict = {}
    parse_news_files(corpus, cfg.news, reports)
    behaviors = args.behaviors or cfg.train_behaviors
    imps = parse_behaviors(corpus, behaviors, cfg.history_max, reports) if behaviors else []
    stats = dataset_stats(corpus, None, imps)
    write_stats(stats, out)
    for key in ("news", "users", "categories", "subcategories"):
        print(f"{key}: {stats[key]}")
    print(f"avg_title_length: {stats['avg_title_length']:.2f}")
    print(f"avg_abstract_length: {stats['avg_abstract_length']:.2f}")
    return 0


# ------------------------------------------------------------------ parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="newsrec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "train": "train a model; writes checkpoints, metrics.csv and an eval report",
        "eval": "score a behaviors file with a checkpoint",
        "sample-tiny": "filter a MIND corpus down to active users and popular news",
        "stats": "corpus statistics and histograms",
        "predict": "top-k candidates for one user history",
    }
    for name, help_text in commands.items():
        p = sub.add_parser(name, help=help_text, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", default=None, help="INI config file")
        p.add_argument("-v", "--verbose", action="store_true", default=False)
        for key in CONFIG_KEYS:
            p.add_argument(f"--{key}", dest=f"cfg__{key}", metavar="VALUE")
        if name in ("eval", "predict"):
            p.add_argument("--checkpoint", default=None)
        if name in ("eval", "sample-tiny", "stats"):
            p.add_argument("--behaviors", default=None, help="behaviors TSV to read")
        if name == "predict":
            p.add_argument("--history", default=None, help="file of clicked news ids, oldest first")
            p.add_argument("--candidates", default=None, help="file of candidate news ids")
            p.add_argument("--user", default=None, help="user id known to the checkpoint")
            p.add_argument("--top_k", type=int, default=5)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    overrides = {k[len("cfg__"):]: v for k, v in vars(args).items() if k.startswith("cfg__")}
    try:
        if args.command in ("eval", "predict"):
            cfg, ckpt = _checkpoint_config(args, overrides)
            return (cmd_eval if args.command == "eval" else cmd_predict)(cfg, args, ckpt)
        cfg = load_config(args.config, overrides)
        return {"train": cmd_train, "sample-tiny": cmd_sample_tiny,
                "stats": cmd_stats}[args.command](cfg, args)
    except NewsrecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
