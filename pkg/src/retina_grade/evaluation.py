"""Metrics and experiment protocols.

Confusion matrices put predictions on rows and the reference grading on
columns: ``cm[p - 1, t - 1]`` counts items predicted ``p`` whose true class
is ``t``. Kappa does not care about the orientation, SE/SP do.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._seeding import derive_seed
from .cascade import (
    GRADES,
    FeatureBank,
    PipelineConfig,
    ProtocolError,
    baseline_fourclass,
    compute_feature_bank,
    grade_bank,
    grade_bank_fourclass,
    select_top3,
    sweep_pair_split,
    sweep_thresholds,
    train_cascade,
    train_stage,
)
from .imaging import NoiseSpec, add_noise
from .nnet import forward

__all__ = [
    "CVResult",
    "MetricError",
    "RocCurve",
    "accuracy",
    "confusion",
    "default_noise_specs",
    "kappa",
    "noise_robustness",
    "roc",
    "roc_protocol",
    "se_sp_acc",
    "stratified_folds",
    "threefold_cv",
    "write_csv",
]


class MetricError(ValueError):
    """A metric is undefined for the given matrix or labels."""


def confusion(predictions, truths, n: int) -> np.ndarray:
    p = np.asarray(predictions, dtype=np.int64).ravel()
    t = np.asarray(truths, dtype=np.int64).ravel()
    if p.size != t.size or p.size == 0:
        raise ValueError(f"need equal, non-zero lengths, got {p.size} and {t.size}")
    if p.min() < 1 or t.min() < 1 or p.max() > n or t.max() > n:
        raise ValueError(f"labels must lie in 1..{n}")
    cm = np.zeros((n, n), dtype=np.int64)
    np.add.at(cm, (p - 1, t - 1), 1)
    return cm


def se_sp_acc(cm, target_class: int):
    """Sensitivity, specificity and accuracy of ``target_class`` against the rest.

    All three are fractions in [0, 1]; the other classes are merged into a
    single non-target class.
    """
    cm = np.asarray(cm)
    n = cm.shape[0]
    if not 1 <= target_class <= n:
        raise ValueError(f"target_class must lie in 1..{n}")
    k = target_class - 1
    col = cm.sum(axis=0)
    target_total = col[k]
    other_total = col.sum() - target_total
    if target_total == 0 or other_total == 0:
        raise MetricError("SE/SP undefined: empty target or non-target population")
    tp = cm[k, k]
    # non-target items not predicted as the target
    tn = other_total - (cm[k].sum() - tp)
    return tp / target_total, tn / other_total, (tp + tn) / col.sum()


def accuracy(cm) -> float:
    cm = np.asarray(cm)
    total = cm.sum()
    if total == 0:
        raise MetricError("accuracy of an empty matrix")
    return float(np.trace(cm) / total)


def kappa(cm) -> float:
    """Cohen's kappa ``(p_o - p_e) / (1 - p_e)``."""
    cm = np.asarray(cm, dtype=np.float64)
    total = cm.sum()
    if total <= 0:
        raise MetricError("kappa of an empty matrix")
    p_o = np.trace(cm) / total
    p_e = float(cm.sum(axis=1) @ cm.sum(axis=0)) / (total * total)
    if p_e == 1.0:
        raise MetricError("kappa undefined: chance agreement is 1")
    return float((p_o - p_e) / (1.0 - p_e))


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float


def roc(scores, labels) -> RocCurve:
    """ROC of ``scores`` (higher = more positive) against binary ``labels`` (1 = positive)."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(bool)
    if s.size != y.size:
        raise ValueError("scores and labels differ in length")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    pos, neg = int(y.sum()), int((~y).sum())
    if pos == 0 or neg == 0:
        raise ProtocolError("ROC needs both positive and negative labels")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    # one curve point per distinct score
    last = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tp = np.cumsum(y)[last]
    fp = np.cumsum(~y)[last]
    tpr = np.r_[0.0, tp / pos]
    fpr = np.r_[0.0, fp / neg]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(fpr, tpr, auc)


# --------------------------------------------------------------------------
# cross-validation


def stratified_folds(grades, folds: int = 3, seed: int = 0) -> np.ndarray:
    """Fold id (0..folds-1) per sample, dealt round-robin within each shuffled grade."""
    g = np.asarray(grades)
    out = np.empty(g.size, dtype=np.int64)
    rng = np.random.default_rng(derive_seed(seed, "folds"))
    for c in np.unique(g):
        idx = np.nonzero(g == c)[0]
        if idx.size < folds:
            raise ProtocolError(f"grade {c} has {idx.size} samples; need at least {folds}")
        idx = rng.permutation(idx)
        out[idx] = np.arange(idx.size) % folds
    return out


@dataclass
class CVResult:
    grades: np.ndarray
    predictions: np.ndarray
    fold: np.ndarray
    sweeps: list = field(default_factory=list)  # per fold: {stage: [(t, mse), ...]}
    selected: list = field(default_factory=list)  # per fold: {stage: (t1, t2, t3)}

    def _groups(self):
        n = int(self.fold.max()) + 1
        for k in range(n):
            yield f"Group {k + 1}", self.fold == k
        yield "Total", np.ones(self.fold.size, dtype=bool)

    def fourclass_rows(self):
        rows = []
        for name, m in self._groups():
            cm = confusion(self.predictions[m], self.grades[m], 4)
            acc = accuracy(cm)
            for c in GRADES:
                se, sp, _ = se_sp_acc(cm, c)
                rows.append({"group": name, "class": c, "se": se, "sp": sp, "acc": acc})
        return rows

    def twoclass_rows(self):
        rows = []
        for name, m in self._groups():
            cm = confusion(np.where(self.predictions[m] > 1, 1, 2), np.where(self.grades[m] > 1, 1, 2), 2)
            se, sp, acc = se_sp_acc(cm, 1)
            rows.append({"group": name, "class": "cataract", "se": se, "sp": sp, "acc": acc})
        return rows

    def twoclass_accuracy(self) -> float:
        return float(np.mean((self.predictions > 1) == (self.grades > 1)))

    def fourclass_accuracy(self) -> float:
        return float(np.mean(self.predictions == self.grades))

    def kappa(self) -> float:
        return kappa(confusion(self.predictions, self.grades, 4))

    def sensitivities(self):
        cm = confusion(self.predictions, self.grades, 4)
        return {c: se_sp_acc(cm, c)[0] for c in GRADES}


def threefold_cv(bank: FeatureBank, grades, config: PipelineConfig, master_seed: int = 0, folds: int = 3, model: str = "cascade") -> CVResult:
    """k-fold grouped evaluation; train on k-1 groups, grade the held-out one."""
    g = np.asarray(grades)
    fold = stratified_folds(g, folds, master_seed)
    pred = np.zeros(g.size, dtype=np.int64)
    sweeps, selected = [], []
    for k in range(folds):
        test = np.nonzero(fold == k)[0]
        trn = np.nonzero(fold != k)[0]
        assert np.intersect1d(test, trn).size == 0
        seed = derive_seed(master_seed, "fold", k)
        if model == "cascade":
            m = train_cascade(bank.subset(trn), g[trn], config, seed)
            pred[test] = grade_bank(m, bank, test)[0]
            sweeps.append(m.sweeps)
            selected.append({s.stage_index: s.thresholds for s in m.stages})
        elif model == "fourclass":
            m = baseline_fourclass(bank.subset(trn), g[trn], config, seed)
            pred[test] = grade_bank_fourclass(m, bank, test)[0]
            sweeps.append({0: m.sweep})
            selected.append({0: tuple(t for t, _ in m.classifiers)})
        else:
            raise ValueError(f"unknown model {model!r}")
    return CVResult(g, pred, fold, sweeps, selected)


# --------------------------------------------------------------------------
# noise robustness


def default_noise_specs():
    return [
        NoiseSpec("gaussian", mean=0.0, sigma=1e-3),
        NoiseSpec("salt_pepper", density=0.05),
        NoiseSpec("speckle", sigma=1e-3),
    ]


def corrupt(images, spec: NoiseSpec, seed: int):
    return [add_noise(img, spec.with_seed(derive_seed(seed, "noise", spec.kind, i))) for i, img in enumerate(images)]


def noise_robustness(images, grades, config: PipelineConfig, noise_specs=None, master_seed: int = 0, clean_bank=None):
    """Per-class SE with clean and corrupted images (train and test both corrupted).

    Returns ``(rows, results)`` where rows are ``{"noise", "class", "se"}`` dicts
    and ``results`` maps each condition name to its :class:`CVResult`.
    """
    specs = default_noise_specs() if noise_specs is None else list(noise_specs)
    if clean_bank is None:
        clean_bank = compute_feature_bank(images, config)
    results = {"noise_free": threefold_cv(clean_bank, grades, config, master_seed)}
    for spec in specs:
        name = spec.kind
        while name in results:
            name += "+"
        bank = compute_feature_bank(corrupt(images, spec, master_seed), config)
        results[name] = threefold_cv(bank, grades, config, master_seed)
    rows = []
    for name, res in results.items():
        for c, se in res.sensitivities().items():
            rows.append({"noise": name, "class": c, "se": se})
    return rows, results


# --------------------------------------------------------------------------
# ROC protocol: 2:1 stratified split, single optimal-threshold classifier


def roc_protocol(bank: FeatureBank, grades, config: PipelineConfig, seed: int = 0):
    """ROC of each stage's best single classifier on adjacent-pair test data.

    Returns ``{stage: (threshold, RocCurve)}``.
    """
    g = np.asarray(grades)
    fold = stratified_folds(g, 3, derive_seed(seed, "roc"))
    trn, test = np.nonzero(fold != 0)[0], np.nonzero(fold == 0)[0]
    train_bank = bank.subset(trn)
    out = {}
    for s in (1, 2, 3):
        rows, classes = sweep_pair_split(g[trn], s, config.sweep_mode)
        sweep = sweep_thresholds(train_bank, rows, classes, 2, config, derive_seed(seed, "roc-sweep", s))
        best = min(sweep, key=lambda p: (p[1], p[0]))[0]
        stage = train_stage(train_bank, g[trn], s, (best,), config, derive_seed(seed, "roc-stage", s))
        net = stage.classifiers[0][1]
        rows_t, classes_t = sweep_pair_split(g[test], s, "adjacent")
        X = bank.scaled(best, test[rows_t])
        scores = forward(net, X)[:, 0]
        out[s] = (best, roc(scores, classes_t == 1))
    return out


# --------------------------------------------------------------------------
# output


def write_csv(path, header, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for r in rows:
            values = [r[h] for h in header] if isinstance(r, dict) else list(r)
            writer.writerow([_fmt(v) for v in values])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6f}"
    return v


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")
