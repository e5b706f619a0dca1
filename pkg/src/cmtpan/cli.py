"""``cmtpan`` command line: synth-data, train, eval, ablate, gradcheck.

Exit codes: 0 success, 1 failed check or assertion, 2 usage, config,
protocol or integrity error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import tensor as T
from .checkpoint import load_checkpoint
from .data import IntegrityError, ProtocolError, load_dataset, save_dataset, synth_dataset
from .metrics import FULL_METRICS, REDUCED_METRICS
from .model import ConfigurationError, ModelConfig, forward, toy_config
from .train import TrainConfig, TrainingError, evaluate, grad_check, predict_all, score_outputs, train

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2
ABLATION_ROWS = (("V1", "v1"), ("V2", "v2"), ("V3", "v3"), ("CMT", "full"))

log = logging.getLogger("cmtpan")


class UsageError(Exception):
    pass


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _read_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    known = set(ModelConfig.__dataclass_fields__) | set(TrainConfig.__dataclass_fields__)
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    return cfg


_OVERRIDES = ("seed", "epochs", "lr", "batch_size", "lr_period", "variant")


def effective_config(args, bands: int | None = None) -> tuple[ModelConfig, TrainConfig, dict]:
    """File values first, then any flag given on the command line."""
    cfg = _read_config_file(getattr(args, "config", None))
    for key in _OVERRIDES:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if bands is not None:
        if "bands" in cfg and cfg["bands"] != bands:
            raise UsageError(f"config says bands={cfg['bands']} but the dataset has {bands}")
        cfg["bands"] = bands
    model_cfg = ModelConfig.from_dict(cfg)
    train_cfg = TrainConfig.from_dict(cfg)
    return model_cfg, train_cfg, {**model_cfg.to_dict(), **train_cfg.to_dict()}


def _window(dataset) -> int:
    if not dataset.samples:
        return 32
    h, w = dataset.samples[0].pan.shape[:2]
    return min(32, h, w)


def _load_training_set(path: str):
    dataset = load_dataset(path)
    if not dataset.has_gt:
        raise ProtocolError(f"{path}: training needs a reduced-resolution dataset with ground truth")
    if not dataset.samples:
        raise UsageError(f"{path}: dataset is empty")
    return dataset


# commands


def cmd_synth_data(args) -> int:
    size, ratio = args.size, args.ratio
    if args.samples < 0:
        raise UsageError("--samples must be >= 0")
    if size <= 0 or ratio < 2 or size % ratio or size % 4:
        raise UsageError(f"--size {size} must be positive and divisible by --ratio {ratio} and by 4")
    if args.bands < 2:
        raise UsageError("--bands must be >= 2")
    dataset = synth_dataset(args.samples, size, args.bands, ratio, args.seed, args.protocol)
    manifest = save_dataset(dataset, args.out)
    print(f"wrote {manifest.count} {manifest.protocol}-resolution samples to {args.out}")
    print(f"pan {size}x{size}  lrms {size // ratio}x{size // ratio}x{args.bands}"
          + (f"  gt {size}x{size}x{args.bands}" if args.protocol == "reduced" else ""))
    print(f"ratio {ratio}  seed {args.seed}  tensors {len(manifest.entries)}")
    return EXIT_OK


def cmd_train(args) -> int:
    dataset = _load_training_set(args.data)
    model_cfg, train_cfg, eff = effective_config(args, dataset.manifest.bands)
    if dataset.manifest.ratio != model_cfg.ratio:
        raise UsageError(f"dataset ratio {dataset.manifest.ratio} but config ratio {model_cfg.ratio}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "effective_config.json", {**eff, "data": str(args.data)})
    result = train(dataset, model_cfg, train_cfg, out)
    last = result.history[-1]
    print(f"trained {model_cfg.variant} for {train_cfg.epochs} epochs: "
          f"L_total {result.history[0]['total']:.6g} -> {last['total']:.6g}")
    print(f"checkpoint {out / 'checkpoint'}  history {out / 'loss_history.csv'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    dataset = load_dataset(args.data)
    report = evaluate(args.checkpoint, dataset, window=_window(dataset))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    report.to_csv(args.out)
    mean, std = report.mean(), report.std()
    for k in report.columns:
        print(f"{k:>9} {mean[k]:.4f} +/- {std[k]:.4f}")
    return EXIT_OK


def _table(path: Path, columns, reports: dict) -> None:
    lines = ["variant," + ",".join(f"{c}_mean,{c}_std" for c in columns)]
    for label, report in reports.items():
        mean, std = report.mean(), report.std()
        lines.append(label + "," + ",".join(f"{mean[c]!r},{std[c]!r}" for c in columns))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_ablate(args) -> int:
    reduced = _load_training_set(args.data_reduced)
    full = load_dataset(args.data_full)
    if full.manifest.protocol != "full":
        raise ProtocolError(f"{args.data_full}: expected a full-resolution dataset")
    if full.manifest.bands != reduced.manifest.bands:
        raise UsageError("reduced and full datasets disagree on band count")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    full_reports, reduced_reports, digests, runs = {}, {}, {}, {}
    for label, variant in ABLATION_ROWS:
        args.variant = variant
        model_cfg, train_cfg, eff = effective_config(args, reduced.manifest.bands)
        result = train(reduced, model_cfg, train_cfg, out / label)
        _write_json(out / label / "effective_config.json", eff)
        runs[label] = (result.params, model_cfg)
        digests[label] = result.shuffle_digest
        full_reports[label] = score_outputs(predict_all(result.params, model_cfg, full.samples), full.samples,
                                            "full", model_cfg.ratio, _window(full))
        reduced_reports[label] = score_outputs(predict_all(result.params, model_cfg, reduced.samples),
                                               reduced.samples, "reduced", model_cfg.ratio, _window(reduced))
        log.info("ablation %s done", label)

    # V1 must equal the full network with both modulators replaced by ones
    params, cfg = runs["V1"]
    probe = (full.samples or reduced.samples)[0]
    with T.no_grad():
        v1_out = forward(probe.pan, probe.lrms, params, cfg, "v1").data
        ones_out = forward(probe.pan, probe.lrms, params, cfg, "full", force_ones=("ms", "pan")).data
    v1_is_ones = bool(np.array_equal(v1_out, ones_out))
    same_shuffle = len(set(digests.values())) == 1

    _table(out / "ablation_full.csv", FULL_METRICS, full_reports)
    _table(out / "ablation_reduced.csv", REDUCED_METRICS, reduced_reports)
    ordering = sorted(full_reports, key=lambda k: -full_reports[k].mean()["HQNR"])
    _write_json(out / "audit.json", {
        "seed": train_cfg.seed, "shuffle_digests": digests, "identical_shuffle": same_shuffle,
        "v1_equals_full_with_ones_modulators": v1_is_ones, "hqnr_ordering": ordering,
    })
    for label in full_reports:
        m = full_reports[label].mean()
        print(f"{label:>4}  D_lambda {m['D_lambda']:.4f}  D_s {m['D_s']:.4f}  HQNR {m['HQNR']:.4f}")
    print("HQNR ordering (reported, not asserted): " + " > ".join(ordering))
    if not (v1_is_ones and same_shuffle):
        print(f"audit failed: v1_is_ones={v1_is_ones} identical_shuffle={same_shuffle}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = _read_config_file(args.config)
    model_cfg = toy_config(**{k: v for k, v in cfg.items() if k in ModelConfig.__dataclass_fields__})
    report = grad_check(model_cfg, args.tolerance, size=args.size, seed=args.seed or 0)
    for e in report.entries:
        print(f"{'ok  ' if e.passed else 'FAIL'} {e.name} n={e.size} max_rel_err={e.max_rel_error:.3e}")
    worst = report.worst
    print(f"{len(report.entries)} parameters, tolerance {args.tolerance:g}, worst {worst.name} {worst.max_rel_error:.3e}")
    if not report.passed:
        print(f"gradient check failed; worst offender {worst.name} ({worst.max_rel_error:.3e})", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


# parser


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat JSON file with model and training keys")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr-period", dest="lr_period", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cmtpan", description="Cross modulation pansharpening toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="write a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--samples", type=int, default=8)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--bands", type=int, default=4)
    p.add_argument("--ratio", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--protocol", choices=("reduced", "full"), default="reduced")
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("train", help="train on a reduced-resolution dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variant", choices=("full", "v1", "v2", "v3"))
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and compare the four variants")
    p.add_argument("--data-reduced", dest="data_reduced", required=True)
    p.add_argument("--data-full", dest="data_full", required=True)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_ablate, variant=None)

    p = sub.add_parser("gradcheck", help="finite-difference audit of every parameter gradient")
    p.add_argument("--config")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--size", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigurationError, ProtocolError, IntegrityError, ValueError) as exc:
        print(f"cmtpan {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingError as exc:
        print(f"cmtpan {args.command}: training failed: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
