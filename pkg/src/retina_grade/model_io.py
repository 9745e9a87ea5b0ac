"""Versioned JSON serialization of :class:`~retina_grade.cascade.CascadeModel`.

Floats are written with 17 significant digits so a save/load round trip is
bit-exact, and keys are emitted in a fixed order so identical models give
byte-identical files.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .cascade import FORMAT_VERSION, CascadeModel, PipelineConfig, StageModel
from .nnet import MLP, TrainConfig

__all__ = ["ModelFormatError", "dumps", "load_model", "loads", "save_model"]


class ModelFormatError(ValueError):
    """Model file is unreadable, of an unknown version or structurally invalid."""


def _encode(obj, indent: int = 0) -> str:
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_encode(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            raise ValueError("model contains a non-finite number")
        return format(v, ".17g") if v != int(v) or abs(v) >= 1e16 else f"{v:.1f}"
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot encode {type(obj).__name__}")


def _config_dict(cfg: PipelineConfig) -> dict:
    d = asdict(cfg)
    d["thresholds"] = list(cfg.thresholds)
    return d


def dumps(model: CascadeModel) -> str:
    doc = {
        "format_version": model.format_version,
        "kernel_half_width": model.half_width,
        "feature_source": model.config.feature_source,
        "feature_scaling": [float(v) for v in model.feature_scaling],
        "config": _config_dict(model.config),
        "stages": [
            {
                "stage_index": s.stage_index,
                "classifiers": [
                    {
                        "threshold": t,
                        "input_dim": net.input_dim,
                        "hidden_dim": net.hidden_dim,
                        "output_dim": net.output_dim,
                        "hidden_weights": net.W1.ravel().tolist(),
                        "hidden_biases": net.b1.tolist(),
                        "output_weights": net.W2.ravel().tolist(),
                        "output_biases": net.b2.tolist(),
                    }
                    for t, net in s.classifiers
                ],
            }
            for s in model.stages
        ],
    }
    return _encode(doc) + "\n"


def save_model(model: CascadeModel, path) -> None:
    Path(path).write_text(dumps(model))


def _array(values, shape, what):
    arr = np.asarray(values, dtype=np.float64)
    if arr.size != int(np.prod(shape)):
        raise ModelFormatError(f"{what}: expected {int(np.prod(shape))} values, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ModelFormatError(f"{what}: non-finite weights")
    return arr.reshape(shape)


def loads(text: str) -> CascadeModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise ModelFormatError("model file lacks a format_version")
    if doc["format_version"] != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format_version {doc['format_version']!r} (expected {FORMAT_VERSION})")
    try:
        cfg_d = dict(doc["config"])
        cfg_d["thresholds"] = tuple(cfg_d["thresholds"])
        cfg_d["train"] = TrainConfig(**cfg_d["train"])
        config = PipelineConfig(**cfg_d)
        stages = []
        for s in doc["stages"]:
            classifiers = []
            for c in s["classifiers"]:
                i, h, o = c["input_dim"], c["hidden_dim"], c["output_dim"]
                net = MLP(
                    _array(c["hidden_weights"], (h, i), "hidden_weights"),
                    _array(c["hidden_biases"], (h,), "hidden_biases"),
                    _array(c["output_weights"], (o, h), "output_weights"),
                    _array(c["output_biases"], (o,), "output_biases"),
                )
                classifiers.append((int(c["threshold"]), net))
            if len(classifiers) != 3:
                raise ModelFormatError(f"stage {s['stage_index']} has {len(classifiers)} classifiers, expected 3")
            stages.append(StageModel(int(s["stage_index"]), classifiers))
        scaling = np.asarray(doc["feature_scaling"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"malformed model file: {exc}") from exc
    if [s.stage_index for s in stages] != [1, 2, 3]:
        raise ModelFormatError("model must contain stages 1, 2, 3 in order")
    if scaling.size != config.rings:
        raise ModelFormatError("feature_scaling length does not match the ring count")
    return CascadeModel(stages, config, scaling, format_version=doc["format_version"])


def load_model(path) -> CascadeModel:
    try:
        text = Path(path).read_text()
    except UnicodeDecodeError as exc:
        raise ModelFormatError(f"{path}: not a text model file") from exc
    return loads(text)
