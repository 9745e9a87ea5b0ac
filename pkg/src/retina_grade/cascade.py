"""Threshold sweep, top-3 selection, voting stages and the four-grade cascade.

Stage ``s`` (1..3) separates grade ``s`` (class 1, "positive") from the
more severe grades (class 2). Grading walks the stages in order and stops at
the first positive vote; an image negative at all three stages is grade 4.

Feature extraction is threshold independent up to the binarization step,
so datasets are first turned into a :class:`FeatureBank` holding the ring
counts of every image at every swept threshold. All training and grading
below reads from banks.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from ._seeding import derive_seed
from .features import feature_stack, ring_areas
from .nnet import TrainConfig, init_mlp, one_hot, predict_class, train
from .preprocess import prepare
from .wavelet import combined_detail, layer_combined_detail, make_kernel

__all__ = [
    "CascadeModel",
    "FeatureBank",
    "FourClassModel",
    "PipelineConfig",
    "StageModel",
    "baseline_fourclass",
    "baseline_original_haar",
    "compute_feature_bank",
    "detail_map",
    "grade",
    "grade_bank",
    "majority",
    "select_top3",
    "stage_split",
    "sweep_pair_split",
    "sweep_thresholds",
    "train_cascade",
    "train_stage",
    "vote",
]

log = logging.getLogger(__name__)

GRADES = (1, 2, 3, 4)
FORMAT_VERSION = 1


class ProtocolError(ValueError):
    """Dataset does not satisfy a training or evaluation precondition."""


@dataclass(frozen=True)
class PipelineConfig:
    half_width: int = 3
    rings: int = 20
    thresholds: tuple = (1, 40)  # inclusive integer range
    hidden: int = 10
    train: TrainConfig = field(default_factory=TrainConfig)
    min_size: int = 10
    eight: bool = True
    side: int = 256
    feature_source: str = "improved"  # "improved" or "haar3"
    sweep_mode: str = "adjacent"  # "adjacent" or "one_vs_rest"
    sweep_per_class: int = 100
    median_window: int = 3
    info_threshold: float = 200.0
    background_threshold: float = 15.0

    def __post_init__(self):
        lo, hi = self.thresholds
        if not (isinstance(lo, (int, np.integer)) and isinstance(hi, (int, np.integer))) or lo < 0 or hi - lo < 2:
            raise ValueError(f"threshold range must be integers LO < HI with at least 3 values, got {self.thresholds}")
        if self.feature_source not in ("improved", "haar3"):
            raise ValueError(f"unknown feature_source {self.feature_source!r}")
        if self.sweep_mode not in ("adjacent", "one_vs_rest"):
            raise ValueError(f"unknown sweep_mode {self.sweep_mode!r}")
        if self.rings < 1 or self.hidden < 1 or self.min_size < 0:
            raise ValueError("rings and hidden must be >= 1, min_size >= 0")
        if self.half_width < 1:
            raise ValueError("half_width must be >= 1")
        if self.feature_source == "haar3" and self.side % 8:
            raise ValueError(f"three-layer Haar features need side divisible by 8, got {self.side}")
        if self.side % 2:
            raise ValueError(f"side must be even, got {self.side}")

    @property
    def threshold_values(self) -> np.ndarray:
        lo, hi = self.thresholds
        return np.arange(lo, hi + 1, dtype=np.int64)

    @property
    def grid_side(self) -> int:
        """Side of the detail grid the annular masks are laid on."""
        return self.side // 8 if self.feature_source == "haar3" else self.side // 2


# --------------------------------------------------------------------------
# features


def detail_map(square, config: PipelineConfig):
    """Combined detail map of a prepared square image under ``config``."""
    if config.feature_source == "haar3":
        return layer_combined_detail(square, 3)
    return combined_detail(square, make_kernel(config.half_width))


@dataclass
class FeatureBank:
    thresholds: np.ndarray  # (T,)
    counts: np.ndarray  # (n_images, T, rings) raw ring counts
    areas: np.ndarray  # (rings,) ring pixel areas used for scaling

    def __len__(self):
        return self.counts.shape[0]

    def scaled(self, threshold=None, rows=None) -> np.ndarray:
        """Ring densities; one threshold gives ``(n, rings)``, otherwise ``(n, T, rings)``."""
        c = self.counts if rows is None else self.counts[rows]
        if threshold is None:
            return c / self.areas
        return c[:, self.column(threshold), :] / self.areas

    def column(self, threshold) -> int:
        hits = np.nonzero(self.thresholds == threshold)[0]
        if hits.size == 0:
            raise KeyError(f"threshold {threshold} not in feature bank")
        return int(hits[0])

    def subset(self, rows) -> "FeatureBank":
        return FeatureBank(self.thresholds, self.counts[rows], self.areas)


def compute_feature_bank(images, config: PipelineConfig, prepared: bool = False, thresholds=None) -> FeatureBank:
    """Ring counts of every image at every threshold.

    With ``prepared=False`` each raw image first goes through
    :func:`retina_grade.preprocess.prepare`.
    """
    thr = config.threshold_values if thresholds is None else np.asarray(thresholds, dtype=np.int64)
    rows = []
    for img in images:
        square = img if prepared else prepare_image(img, config)
        rows.append(feature_stack(detail_map(square, config), thr, config.rings, config.min_size, config.eight))
    counts = np.stack(rows) if rows else np.zeros((0, thr.size, config.rings), np.int64)
    g = config.grid_side
    areas = ring_areas(g, g, config.rings).astype(np.float64)
    if np.any(areas == 0):
        raise ProtocolError(f"{config.rings} rings on a {g}x{g} detail grid leave empty rings; use fewer rings or a larger side")
    return FeatureBank(thr, counts, areas)


def prepare_image(img, config: PipelineConfig):
    return prepare(
        img,
        side=config.side,
        info_threshold=config.info_threshold,
        background_threshold=config.background_threshold,
        median_window=config.median_window,
    )


# --------------------------------------------------------------------------
# sweep and selection


def stage_split(grades, stage: int):
    """Rows and 1/2 classes of the stage's one-vs-rest problem."""
    grades = np.asarray(grades)
    rows = np.nonzero(grades >= stage)[0]
    classes = np.where(grades[rows] == stage, 1, 2)
    return rows, classes


def sweep_pair_split(grades, stage: int, mode: str = "adjacent"):
    """Rows and classes the stage's threshold sweep trains on."""
    grades = np.asarray(grades)
    if mode == "one_vs_rest":
        return stage_split(grades, stage)
    rows = np.nonzero((grades == stage) | (grades == stage + 1))[0]
    classes = np.where(grades[rows] == stage, 1, 2)
    return rows, classes


def _subsample(rows, classes, per_class: int, seed: int):
    rng = np.random.default_rng(seed)
    keep = []
    for c in np.unique(classes):
        idx = rows[classes == c]
        if idx.size > per_class:
            idx = np.sort(rng.choice(idx, size=per_class, replace=False))
        keep.append(idx)
    keep = np.sort(np.concatenate(keep))
    lookup = dict(zip(rows.tolist(), classes.tolist()))
    return keep, np.array([lookup[r] for r in keep.tolist()])


def sweep_thresholds(bank: FeatureBank, rows, classes, n_classes: int, config: PipelineConfig, seed: int):
    """Train a fresh MLP at every bank threshold; returns ``[(threshold, mse), ...]``."""
    rows = np.asarray(rows)
    classes = np.asarray(classes)
    if np.unique(classes).size < 2:
        raise ProtocolError("threshold sweep needs at least two classes")
    rows, classes = _subsample(rows, classes, config.sweep_per_class, derive_seed(seed, "subsample"))
    T = one_hot(classes, n_classes)
    X_all = bank.scaled(rows=rows)
    out = []
    for j, t in enumerate(bank.thresholds):
        net = init_mlp(bank.areas.size, config.hidden, n_classes, derive_seed(seed, "sweep", int(t)), config.train.init_scale)
        _, err = train(net, X_all[:, j, :], T, config.train)
        out.append((int(t), err))
    return out


def select_top3(sweep):
    """Thresholds of the three smallest MSEs, ascending; ties favour smaller thresholds."""
    if len(sweep) < 3:
        raise ProtocolError(f"need at least 3 sweep entries, got {len(sweep)}")
    best = sorted(sweep, key=lambda p: (p[1], p[0]))[:3]
    return tuple(sorted(int(t) for t, _ in best))


# --------------------------------------------------------------------------
# stages and cascade


@dataclass
class StageModel:
    stage_index: int
    classifiers: list  # [(threshold, MLP), ...] of length 3

    @property
    def thresholds(self):
        return tuple(t for t, _ in self.classifiers)


@dataclass
class CascadeModel:
    stages: list  # three StageModel, stage 1 first
    config: PipelineConfig
    feature_scaling: np.ndarray
    format_version: int = FORMAT_VERSION
    sweeps: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def half_width(self) -> int:
        return 1 if self.config.feature_source == "haar3" else self.config.half_width

    @property
    def thresholds(self):
        return sorted({t for s in self.stages for t in s.thresholds})


def majority(votes) -> int:
    """Winner of three binary votes given as 1 (positive) / 2 (negative)."""
    votes = list(votes)
    return 1 if sum(1 for v in votes if v == 1) * 2 > len(votes) else 2


def train_stage(bank: FeatureBank, grades, stage_index: int, thresholds, config: PipelineConfig, seed: int) -> StageModel:
    """Train one two-class MLP per threshold on the stage's one-vs-rest split."""
    rows, classes = stage_split(grades, stage_index)
    if not (np.any(classes == 1) and np.any(classes == 2)):
        raise ProtocolError(f"stage {stage_index}: both sides of the split must be non-empty")
    T = one_hot(classes, 2)
    out = []
    for t in thresholds:
        X = bank.scaled(t, rows)
        net = init_mlp(bank.areas.size, config.hidden, 2, derive_seed(seed, "stage", stage_index, int(t)), config.train.init_scale)
        net, _ = train(net, X, T, config.train)
        out.append((int(t), net))
    return StageModel(stage_index, out)


def _check_grades(grades):
    present = set(np.unique(np.asarray(grades)).tolist())
    missing = [g for g in GRADES if g not in present]
    if missing:
        raise ProtocolError(f"dataset is missing grade(s) {missing}")


def train_cascade(bank: FeatureBank, grades, config: PipelineConfig, seed: int = 0) -> CascadeModel:
    """Sweep, select three thresholds and train the voting stage, for stages 1..3."""
    grades = np.asarray(grades)
    _check_grades(grades)
    stages = []
    sweeps = {}
    for s in (1, 2, 3):
        rows, classes = sweep_pair_split(grades, s, config.sweep_mode)
        sweep = sweep_thresholds(bank, rows, classes, 2, config, derive_seed(seed, "stage-sweep", s))
        chosen = select_top3(sweep)
        log.info("stage %d: selected thresholds %s", s, chosen)
        sweeps[s] = sweep
        stages.append(train_stage(bank, grades, s, chosen, config, seed))
    return CascadeModel(stages, config, bank.areas.copy(), sweeps=sweeps)


def _votes_for(classifiers, feats):
    return np.stack([predict_class(net, feats(t)) for t, net in classifiers], axis=-1)


def grade_bank(model: CascadeModel, bank: FeatureBank, rows=None):
    """Grade every bank row; returns ``(grades, votes)``.

    ``votes[i, s, k]`` is classifier ``k`` of stage ``s`` on image ``i`` (1 or
    2), or 0 when the stage was never consulted.
    """
    scale = model.feature_scaling

    def feats(t):
        c = bank.counts if rows is None else bank.counts[rows]
        return c[:, bank.column(t), :] / scale

    n = len(bank) if rows is None else len(rows)
    grades = np.full(n, 4, dtype=np.int64)
    votes = np.zeros((n, 3, 3), dtype=np.int64)
    pending = np.ones(n, dtype=bool)
    for s, stage in enumerate(model.stages):
        v = _votes_for(stage.classifiers, feats)
        votes[pending, s, :] = v[pending]
        positive = (v == 1).sum(axis=1) >= 2
        hit = pending & positive
        grades[hit] = stage.stage_index
        pending &= ~positive
    return grades, votes


def _single_image_bank(img, model_config: PipelineConfig, thresholds, prepared: bool, scaling):
    square = img if prepared else prepare_image(img, model_config)
    counts = feature_stack(
        detail_map(square, model_config), np.asarray(thresholds), model_config.rings, model_config.min_size, model_config.eight
    )
    return FeatureBank(np.asarray(thresholds, dtype=np.int64), counts[None], scaling)


def vote(stage: StageModel, img, model: CascadeModel, prepared: bool = True) -> int:
    """Majority decision (1 positive / 2 negative) of one stage on one image."""
    bank = _single_image_bank(img, model.config, stage.thresholds, prepared, model.feature_scaling)
    v = _votes_for(stage.classifiers, bank.scaled)
    return majority(v[0])


def grade(model: CascadeModel, img, prepared: bool = True):
    """Grade one image; returns ``(grade, votes)`` with ``votes`` as in :func:`grade_bank`."""
    bank = _single_image_bank(img, model.config, model.thresholds, prepared, model.feature_scaling)
    g, v = grade_bank(model, bank)
    return int(g[0]), v[0]


# --------------------------------------------------------------------------
# baselines


@dataclass
class FourClassModel:
    classifiers: list  # [(threshold, 4-output MLP), ...]
    config: PipelineConfig
    feature_scaling: np.ndarray
    sweep: list = field(default_factory=list, compare=False, repr=False)


def fourclass_vote(predictions) -> int:
    """Plurality of grade votes; ties go to the most severe tied grade."""
    counts = np.bincount(np.asarray(predictions, dtype=np.int64), minlength=5)
    top = counts.max()
    return int(np.nonzero(counts == top)[0].max())


def baseline_fourclass(bank: FeatureBank, grades, config: PipelineConfig, seed: int = 0) -> FourClassModel:
    """Single 4-output MLP per threshold, three best thresholds voting."""
    grades = np.asarray(grades)
    _check_grades(grades)
    rows = np.arange(grades.size)
    sweep = sweep_thresholds(bank, rows, grades, 4, config, derive_seed(seed, "fourclass-sweep"))
    chosen = select_top3(sweep)
    log.info("four-class baseline: selected thresholds %s", chosen)
    T = one_hot(grades, 4)
    classifiers = []
    for t in chosen:
        net = init_mlp(bank.areas.size, config.hidden, 4, derive_seed(seed, "fourclass", int(t)), config.train.init_scale)
        net, _ = train(net, bank.scaled(t), T, config.train)
        classifiers.append((int(t), net))
    return FourClassModel(classifiers, config, bank.areas.copy(), sweep=sweep)


def grade_bank_fourclass(model: FourClassModel, bank: FeatureBank, rows=None):
    c = bank.counts if rows is None else bank.counts[rows]
    preds = np.stack(
        [predict_class(net, c[:, bank.column(t), :] / model.feature_scaling) for t, net in model.classifiers], axis=-1
    )
    return np.array([fourclass_vote(p) for p in preds], dtype=np.int64), preds


def baseline_original_haar(bank: FeatureBank, grades, config: PipelineConfig, seed: int = 0) -> CascadeModel:
    """The cascade trained on classic three-layer Haar features.

    ``bank`` must have been computed with ``feature_source="haar3"``.
    """
    cfg = config if config.feature_source == "haar3" else replace(config, feature_source="haar3")
    if bank.areas.sum() != cfg.grid_side**2:
        raise ValueError("feature bank was not computed on the three-layer Haar grid")
    return train_cascade(bank, grades, cfg, seed)
