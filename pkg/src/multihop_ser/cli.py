"""Command-line entry point: prepare, train, evaluate, predict, gradcheck.

Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from pathlib import Path

from .attention import AttentionConfigError
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import MODELS, ConfigError, load_config
from .data import (
    EMOTIONS,
    DataError,
    ManifestOptions,
    Vocabulary,
    folds_from_json,
    folds_to_json,
    load_manifest,
    make_folds,
    read_manifest_records,
)
from .estimator import EmotionClassifier, TrainingDivergedError
from .evaluation import cross_validate
from .gradcheck import format_report, run_gradcheck

log = logging.getLogger("multihop_ser")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _manifest_options(cfg):
    return ManifestOptions(cfg.mfcc_dim, cfg.compute_deltas, cfg.d_p if cfg.d_p > 0 else None)


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _resolved_manifest(src, dest):
    """Copy a manifest with feature paths made absolute."""
    header, records = read_manifest_records(src)
    base = Path(src).resolve().parent
    lines = [json.dumps({"header": header}, sort_keys=True)] if header else []
    for rec in records:
        rec = dict(rec)
        for key in ("mfcc_path", "prosody_path"):
            if rec.get(key):
                rec[key] = str((base / rec[key]).resolve())
        lines.append(json.dumps(rec, sort_keys=True))
    Path(dest).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- commands -----------------------------------------------------------------


def cmd_prepare(args, cfg):
    out = Path(args.out_dir)
    rejected = []
    utts = load_manifest(args.manifest, _manifest_options(cfg), rejected=rejected)
    out.mkdir(parents=True, exist_ok=True)
    (out / "vocab").mkdir(exist_ok=True)
    _resolved_manifest(args.manifest, out / "manifest.jsonl")
    (out / "config.txt").write_text(cfg.dump(), encoding="utf-8")

    counts = Counter(u.label for u in utts)
    report = {
        "n_utterances": len(utts),
        "class_counts": {k: counts.get(k, 0) for k in EMOTIONS},
        "rejected": [{"id": r.id, "reason": r.reason} for r in rejected],
        "n_folds": cfg.n_folds,
        "seed": cfg.seed,
        "group_by_session": cfg.group_by_session,
    }
    if not utts:
        log.warning("no utterances left after label filtering; nothing to split")
        report["n_folds"] = 0
    else:
        groups = [u.session for u in utts] if cfg.group_by_session else None
        folds = make_folds(utts, cfg.n_folds, cfg.seed, groups)
        (out / "folds.json").write_text(folds_to_json(folds) + "\n", encoding="utf-8")
        by_id = {u.id: u for u in utts}
        for f in folds:
            vocab = Vocabulary.build(by_id[i].transcript for i in f.train)
            (out / "vocab" / f"fold{f.fold_index}.json").write_text(vocab.to_json() + "\n", encoding="utf-8")
    _write_json(out / "report.json", report)
    lines = [f"utterances: {len(utts)}"]
    lines += [f"  {k:<8} {v}" for k, v in report["class_counts"].items()]
    lines.append(f"rejected: {len(rejected)}")
    (out / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return EXIT_OK


def _load_prepared(prepared, cfg):
    prepared = Path(prepared)
    utts = load_manifest(prepared / "manifest.jsonl", _manifest_options(cfg))
    folds_path = prepared / "folds.json"
    if not folds_path.exists():
        raise DataError(f"{prepared}: no folds.json (was prepare run on an empty manifest?)")
    folds = folds_from_json(folds_path.read_text(encoding="utf-8"))
    return utts, folds


def _prepared_config(args):
    base = Path(args.prepared) / "config.txt"
    path = args.config or (base if base.exists() else None)
    return load_config(path, args.set or (), **_flag_overrides(args))


def cmd_train(args, cfg):
    utts, folds = _load_prepared(args.prepared, cfg)
    split = {f.fold_index: f for f in folds}.get(args.fold)
    if split is None:
        raise DataError(f"fold {args.fold} not found (have {len(folds)})")
    by_id = {u.id: u for u in utts}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    est = EmotionClassifier(**cfg.estimator_params())
    with open(out / "train_log.jsonl", "w", encoding="utf-8") as logf:

        def on_epoch(rec):
            logf.write(json.dumps(rec, sort_keys=True) + "\n")
            msg = f"epoch {rec['epoch']:3d}  loss {rec['train_loss']:.4f}"
            if "dev_wa" in rec:
                msg += f"  dev WA {rec['dev_wa']:.4f}  UA {rec['dev_ua']:.4f}"
            print(msg)

        est.fit([by_id[i] for i in split.train], X_dev=[by_id[i] for i in split.dev], callback=on_epoch)
    save_checkpoint(out / "model.ckpt", est, extra={"fold": args.fold})
    print(f"best epoch {est.best_epoch_}; checkpoint written to {out / 'model.ckpt'}")
    return EXIT_OK


def cmd_evaluate(args, cfg):
    utts, folds = _load_prepared(args.prepared, cfg)
    est = EmotionClassifier(**cfg.estimator_params())
    result = cross_validate(utts, est, folds=folds, n_jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    record = result.to_dict()
    record["config"] = cfg.to_dict()
    record["seed"] = cfg.seed
    _write_json(out / "report.json", record)
    lines = []
    for f in result.folds:
        if f.failed:
            lines.append(f"fold {f.fold}: FAILED ({f.error['message']})")
        else:
            lines.append(f"fold {f.fold}: " + f.report.format().replace("\n", "\n  "))
    if result.excluded:
        lines.append(f"excluded folds: {result.excluded}")
    lines.append("")
    lines.append(f"{'Model':<12}{'Modality':<10}{'WA':<8}UA")
    lines.append(result.table_row())
    text = "\n".join(lines) + "\n"
    (out / "report.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK if result.reports else EXIT_RUNTIME


def cmd_predict(args, cfg):
    est = load_checkpoint(args.checkpoint)
    utts = load_manifest(args.manifest, ManifestOptions(cfg.mfcc_dim, cfg.compute_deltas, est._prosody_dim() or None))
    if not utts:
        records = []
    else:
        width = utts[0].audio.shape[1]
        if est.network_.uses_audio and width != est.d_audio_in_:
            raise CheckpointError(f"manifest audio width {width} != checkpoint's {est.d_audio_in_}")
        records = est.predict_details(utts)
    text = "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_gradcheck(args, cfg):
    models = args.models or list(MODELS)
    results = run_gradcheck(models, cfg.seed, args.zero_weights, cfg.attention_mode)
    print(format_report(results))
    ok = all(r.passed for r in results)
    print("gradcheck:", "PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_RUNTIME


# -- argument parsing ------------------------------------------------------------


def _flag_overrides(args):
    return {"model": getattr(args, "model", None), "seed": getattr(args, "seed", None)}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    common.add_argument("--model", choices=MODELS)
    common.add_argument("--seed", type=int)

    parser = argparse.ArgumentParser(prog="multihop-ser", description=__doc__.splitlines()[0])
    parser.add_argument("--dump-config", action="store_true", help="print the effective configuration and exit")
    parser.add_argument("--config", dest="top_config", help=argparse.SUPPRESS)
    parser.add_argument("--set", dest="top_set", action="append", help=argparse.SUPPRESS)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("prepare", parents=[common], help="validate a manifest, build folds and vocabularies")
    p.add_argument("manifest")
    p.add_argument("out_dir")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", parents=[common], help="train one fold and save a checkpoint")
    p.add_argument("prepared")
    p.add_argument("--fold", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train, prepared_config=True)

    p = sub.add_parser("evaluate", parents=[common], help="cross-validate and report WA/UA")
    p.add_argument("prepared")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=None, help="folds to run in parallel")
    p.set_defaults(func=cmd_evaluate, prepared_config=True)

    p = sub.add_parser("predict", parents=[common], help="label utterances with a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("manifest")
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")
    p.add_argument("--models", nargs="+", choices=MODELS)
    p.add_argument("--zero-weights", action="store_true")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command is None or args.dump_config:
            cfg = load_config(
                getattr(args, "config", None) or args.top_config,
                (args.top_set or []) + (getattr(args, "set", None) or []),
                **_flag_overrides(args),
            )
            if args.dump_config:
                sys.stdout.write(cfg.dump())
                return EXIT_OK
            parser.print_help()
            return EXIT_INVALID
        if getattr(args, "prepared_config", False):
            cfg = _prepared_config(args)
        else:
            cfg = load_config(args.config, args.set or (), **_flag_overrides(args))
        return args.func(args, cfg)
    except (ConfigError, DataError, CheckpointError, AttentionConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except TrainingDivergedError as exc:
        print(f"error: {exc}; diagnostics: {json.dumps(exc.diagnostics)}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
