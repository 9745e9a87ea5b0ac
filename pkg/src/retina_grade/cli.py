"""Command-line entry point: ``retina-grade {synth,sweep,train,grade,eval}``.

Configuration precedence is flags > ``--config`` JSON file > defaults. The
seed falls back to ``$RETINA_GRADE_SEED`` when neither flag nor file sets
it. Every command echoes the resolved configuration on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import evaluation
from ._seeding import derive_seed
from .cascade import (
    PipelineConfig,
    ProtocolError,
    compute_feature_bank,
    grade,
    prepare_image,
    select_top3,
    sweep_pair_split,
    sweep_thresholds,
    train_cascade,
)
from .imaging import ImageFormatError, NoiseSpec, read_image
from .model_io import ModelFormatError, load_model, save_model
from .nnet import TrainConfig, TrainingError
from .preprocess import PreprocessError
from .synthgen import generate_dataset, write_dataset

log = logging.getLogger("retina_grade")


@dataclass
class RunConfig:
    n: int = 3
    rings: int = 20
    thresholds: str = "1:40"
    hidden: int = 10
    lr: float = 0.5
    epochs: int = 2000
    folds: int = 3
    seed: int | None = None
    noise: str = "none"
    sweep_mode: str = "adjacent"
    side: int = 256
    extras: dict = field(default_factory=dict)

    def pipeline(self, **overrides) -> PipelineConfig:
        lo, hi = parse_range(self.thresholds)
        cfg = PipelineConfig(
            half_width=self.n,
            rings=self.rings,
            thresholds=(lo, hi),
            hidden=self.hidden,
            train=TrainConfig(learning_rate=self.lr, epochs=self.epochs),
            side=self.side,
            sweep_mode=self.sweep_mode,
        )
        return replace(cfg, **overrides) if overrides else cfg

    @property
    def master_seed(self) -> int:
        return 0 if self.seed is None else int(self.seed)


_CONFIG_KEYS = {f.name for f in fields(RunConfig)} - {"extras"}


def parse_range(text: str):
    try:
        lo, hi = (int(v) for v in str(text).split(":"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"threshold range must look like LO:HI, got {text!r}") from exc
    if lo < 0 or hi - lo < 2:
        raise argparse.ArgumentTypeError(f"threshold range {text!r} must hold at least 3 values >= 0")
    return lo, hi


def parse_noise(text: str):
    """``none`` | ``default`` | ``kind[:key=val,...][;kind...]``."""
    if text in (None, "none"):
        return []
    if text == "default":
        return evaluation.default_noise_specs()
    specs = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        kind, _, params = chunk.partition(":")
        kw = {}
        for item in filter(None, params.split(",")):
            key, _, val = item.partition("=")
            if key not in ("mean", "sigma", "density"):
                raise argparse.ArgumentTypeError(f"unknown noise parameter {key!r}")
            kw[key] = float(val)
        specs.append(NoiseSpec(kind.strip(), **kw))
    return specs


def resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        data = json.loads(Path(args.config).read_text())
        unknown = set(data) - _CONFIG_KEYS
        if unknown:
            raise ProtocolError(f"unknown config key(s): {sorted(unknown)}")
        cfg = replace(cfg, **data)
    for name in _CONFIG_KEYS:
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    if cfg.seed is None and os.environ.get("RETINA_GRADE_SEED"):
        cfg.seed = int(os.environ["RETINA_GRADE_SEED"])
    parse_range(cfg.thresholds)
    return cfg


def read_manifest(path):
    """``(images, grades, paths)`` from a ``path,grade,seed`` manifest."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    images, grades, paths = [], [], []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"path", "grade"} <= set(reader.fieldnames):
            raise ProtocolError(f"{path}: manifest needs 'path' and 'grade' columns")
        for row in reader:
            p = Path(row["path"])
            p = p if p.is_absolute() else path.parent / p
            images.append(read_image(p))
            grades.append(int(row["grade"]))
            paths.append(str(p))
    if not images:
        raise ProtocolError(f"{path}: manifest lists no images")
    return images, np.asarray(grades), paths


def _require_grades(grades, needed, what):
    missing = sorted(set(needed) - set(np.unique(grades).tolist()))
    if missing:
        raise ProtocolError(f"{what}: manifest has no images of grade(s) {missing}")


def _echo(cfg: RunConfig):
    print("config: " + json.dumps(_cfg_dict(cfg), sort_keys=True), file=sys.stderr)


def _cfg_dict(cfg: RunConfig) -> dict:
    d = asdict(cfg)
    d.pop("extras")
    d["seed"] = cfg.master_seed
    return d


def _out_dir(path) -> Path:
    out = Path(path)
    if not out.is_dir():
        raise FileNotFoundError(f"output directory does not exist: {out}")
    return out


# --------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    cfg = resolve_config(args)
    _echo(cfg)
    out = _out_dir(args.out)
    records = generate_dataset(args.per_class, cfg.side, cfg.master_seed)
    manifest = write_dataset(records, out, fmt=args.format)
    print(f"wrote {len(records)} images and {manifest}")
    return 0


def cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    _echo(cfg)
    stage = {"1v2": 1, "2v3": 2, "3v4": 3}[args.pair]
    images, grades, _ = read_manifest(args.manifest)
    _require_grades(grades, (stage, stage + 1), f"sweep {args.pair}")
    pipe = cfg.pipeline()
    rows, classes = sweep_pair_split(grades, stage, "adjacent")
    bank = compute_feature_bank([images[i] for i in rows], pipe)
    sweep = sweep_thresholds(bank, np.arange(rows.size), classes, 2, pipe, derive_seed(cfg.master_seed, "stage-sweep", stage))
    evaluation.write_csv(args.out, ["threshold", "mse"], sweep)
    top = select_top3(sweep)
    print("top3: " + " ".join(str(t) for t in top))
    return 0


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    _echo(cfg)
    images, grades, _ = read_manifest(args.manifest)
    _require_grades(grades, (1, 2, 3, 4), "train")
    pipe = cfg.pipeline()
    bank = compute_feature_bank(images, pipe)
    model = train_cascade(bank, grades, pipe, cfg.master_seed)
    for s in model.stages:
        print(f"stage {s.stage_index}: thresholds {' '.join(str(t) for t in s.thresholds)}")
    save_model(model, args.model)
    return 0


def cmd_grade(args) -> int:
    model = load_model(args.model)
    records = []
    for p in args.images:
        img = read_image(p)
        g, votes = grade(model, prepare_image(img, model.config), prepared=True)
        stage_votes = {f"stage{s + 1}": votes[s].tolist() for s in range(3) if votes[s].any()}
        records.append({"path": str(p), "grade": g, "votes": stage_votes})
        print(f"{p}\t{g}")
    text = json.dumps(records, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_eval(args) -> int:
    cfg = resolve_config(args)
    _echo(cfg)
    out = _out_dir(args.out)
    images, grades, _ = read_manifest(args.manifest)
    _require_grades(grades, (1, 2, 3, 4), "eval")
    pipe = cfg.pipeline()
    seed = cfg.master_seed
    tables = {}

    def emit(name, header, rows):
        # every CSV is mirrored verbatim in summary.json under "tables"
        rows = [dict(zip(header, r)) if not isinstance(r, dict) else r for r in rows]
        evaluation.write_csv(out / name, header, rows)
        tables[name] = rows

    bank = compute_feature_bank(images, pipe)
    res = evaluation.threefold_cv(bank, grades, pipe, seed, folds=cfg.folds)
    header = ["group", "class", "se", "sp", "acc"]
    emit("cv_twoclass.csv", header, res.twoclass_rows())
    emit("cv_fourclass.csv", header, res.fourclass_rows())
    cm = evaluation.confusion(res.predictions, res.grades, 4)
    emit("cv_confusion.csv", ["predicted", "true_1", "true_2", "true_3", "true_4"], [(p + 1, *cm[p]) for p in range(4)])
    for k, sw in enumerate(res.sweeps):
        for s, curve in sw.items():
            emit(f"sweep_fold{k + 1}_stage{s}.csv", ["threshold", "mse"], curve)
    summary = {
        "config": _cfg_dict(cfg),
        "orientation": "confusion rows = prediction, columns = reference grade",
        "twoclass_acc": res.twoclass_accuracy(),
        "fourclass_acc": res.fourclass_accuracy(),
        "kappa": res.kappa(),
        "selected_thresholds": [{str(s): list(t) for s, t in sel.items()} for sel in res.selected],
    }

    if args.baseline == "fourclass":
        base = evaluation.threefold_cv(bank, grades, pipe, seed, folds=cfg.folds, model="fourclass")
        rows = [{"model": "cascade", "class": c, "se": v} for c, v in res.sensitivities().items()]
        rows += [{"model": "fourclass", "class": c, "se": v} for c, v in base.sensitivities().items()]
        emit("baseline_fourclass_se.csv", ["model", "class", "se"], rows)
        for k, sw in enumerate(base.sweeps):
            emit(f"fourclass_sweep_fold{k + 1}.csv", ["threshold", "mse"], sw[0])
        summary["baseline_fourclass"] = {
            "fourclass_acc": base.fourclass_accuracy(),
            "kappa": base.kappa(),
            "cascade_at_least_as_accurate": res.fourclass_accuracy() >= base.fourclass_accuracy(),
        }
    elif args.baseline == "haar3":
        pipe3 = replace(pipe, feature_source="haar3")
        bank3 = compute_feature_bank(images, pipe3)
        base = evaluation.threefold_cv(bank3, grades, pipe3, seed, folds=cfg.folds)
        wins = 0
        for s in (1, 2, 3):
            rows, classes = sweep_pair_split(grades, s, pipe.sweep_mode)
            sseed = derive_seed(seed, "stage-sweep", s)
            a = sweep_thresholds(bank, rows, classes, 2, pipe, sseed)
            b = sweep_thresholds(bank3, rows, classes, 2, pipe3, sseed)
            emit(f"mse_curves_stage{s}.csv", ["threshold", "mse_improved", "mse_haar3"], [(t, ma, mb) for (t, ma), (_, mb) in zip(a, b)])
            wins += min(m for _, m in a) <= min(m for _, m in b)
        rows = [{"model": "improved", "class": c, "se": v} for c, v in res.sensitivities().items()]
        rows += [{"model": "haar3", "class": c, "se": v} for c, v in base.sensitivities().items()]
        emit("baseline_haar3_se.csv", ["model", "class", "se"], rows)
        summary["baseline_haar3"] = {
            "fourclass_acc": base.fourclass_accuracy(),
            "kappa": base.kappa(),
            "stages_improved_mse_not_worse": int(wins),
            "improved_wins_majority": wins >= 2,
        }

    specs = parse_noise(cfg.noise)
    if specs:
        rows, results = evaluation.noise_robustness(images, grades, pipe, specs, seed, clean_bank=bank)
        emit("noise.csv", ["noise", "class", "se"], rows)
        clean = results["noise_free"].sensitivities()
        drops = {n: max(clean[c] - v for c, v in r.sensitivities().items()) for n, r in results.items() if n != "noise_free"}
        trend = all(k in drops for k in ("speckle", "salt_pepper", "gaussian"))
        summary["noise_max_se_drop"] = drops
        if trend:
            summary["noise_trend_speckle_le_sp_le_gaussian"] = drops["speckle"] <= drops["salt_pepper"] <= drops["gaussian"]

    if args.roc:
        curves = evaluation.roc_protocol(bank, grades, pipe, seed)
        for s, (t, curve) in curves.items():
            emit(f"roc_stage{s}.csv", ["fpr", "tpr"], zip(curve.fpr, curve.tpr))
        summary["roc"] = {str(s): {"threshold": t, "auc": c.auc} for s, (t, c) in curves.items()}

    summary["tables"] = tables
    evaluation.write_json(out / "summary.json", _stringify_keys(summary))
    print(f"two-class ACC {res.twoclass_accuracy():.4f}  four-class ACC {res.fourclass_accuracy():.4f}  kappa {res.kappa():.4f}")
    return 0


def _stringify_keys(obj):
    if isinstance(obj, dict):
        return {str(k): _stringify_keys(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_stringify_keys(v) for v in obj]
    return obj


# --------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file with RunConfig keys")
    p.add_argument("--n", type=int, help="kernel half-width (default 3)")
    p.add_argument("--rings", type=int, help="annular mask count (default 20)")
    p.add_argument("--thresholds", help="threshold range LO:HI (default 1:40)")
    p.add_argument("--hidden", type=int, help="hidden units (default 10)")
    p.add_argument("--lr", type=float, help="learning rate (default 0.5)")
    p.add_argument("--epochs", type=int, help="training epochs (default 2000)")
    p.add_argument("--folds", type=int, help="cross-validation folds (default 3)")
    p.add_argument("--seed", type=int, help="master seed (fallback $RETINA_GRADE_SEED, then 0)")
    p.add_argument("--side", type=int, help="working image side (default 256)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="retina-grade", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic graded dataset")
    _common(p)
    p.add_argument("--per-class", type=int, default=10)
    p.add_argument("--format", choices=("pgm", "png"), default="pgm")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sweep", help="MSE-vs-threshold curve for one adjacent grade pair")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--pair", choices=("1v2", "2v3", "3v4"), required=True)
    p.add_argument("--out", required=True, help="CSV path")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("train", help="train the three-stage cascade")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True, help="output model JSON")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grade", help="grade images with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--out", help="write JSON results here instead of stdout")
    p.add_argument("images", nargs="+")
    p.set_defaults(func=cmd_grade)

    p = sub.add_parser("eval", help="cross-validated evaluation and baselines")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--baseline", choices=("fourclass", "haar3"))
    p.add_argument(
        "--noise", nargs="?", const="default", help="none | default (same as a bare --noise) | kind:key=val,...;kind..."
    )
    p.add_argument("--roc", action="store_true", help="also run the 2:1 split ROC protocol")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ProtocolError, ModelFormatError, ImageFormatError, PreprocessError, TrainingError, FileNotFoundError, argparse.ArgumentTypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
