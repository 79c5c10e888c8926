"""Full-batch SGD training, losses, metrics and parameter/history files."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from . import numerics as nx
from .layers import ComplexBatch, CwAtConfig, CwCnnConfig, Params, cwat_forward, cwcnn_forward, init_cwat, init_cwcnn
from .numerics import Tape, Tensor
from .synth import Dataset

__all__ = [
    "MODELS",
    "Model",
    "NonFiniteLossError",
    "OptimizerConfig",
    "ParamsFormatError",
    "TrainHistory",
    "TrainedModel",
    "build_model",
    "count_parameters",
    "default_optimizer",
    "dumps_params",
    "evaluate",
    "load_params",
    "loads_params",
    "mse_loss",
    "predict",
    "rmse",
    "save_history",
    "save_params",
    "sgd_step",
    "train_model",
]


class NonFiniteLossError(FloatingPointError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"loss became {loss} at step {step}; aborting")
        self.step = step
        self.loss = loss


class ParamsFormatError(ValueError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float
    momentum: float = 0.0
    weight_decay: float = 0.0
    steps: int = 400
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if not self.weight_decay >= 0:
            raise ValueError("weight decay must be non-negative")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError("steps must be a positive integer")


def default_optimizer(model: str, **overrides) -> OptimizerConfig:
    defaults = {
        "cwcnn": dict(learning_rate=0.001, momentum=0.9, weight_decay=0.0),
        "cwat": dict(learning_rate=0.001, momentum=0.7, weight_decay=0.02),
    }
    if model not in defaults:
        raise ValueError(f"unknown model {model!r}; valid models: {', '.join(MODELS)}")
    return OptimizerConfig(**{**defaults[model], **{k: v for k, v in overrides.items() if v is not None}})


@dataclass
class TrainHistory:
    losses: list[float] = field(default_factory=list)
    step_seconds: list[float] = field(default_factory=list)
    test_rmse: float = math.nan
    parameters: int = 0

    def __len__(self) -> int:
        return len(self.losses)

    @property
    def total_seconds(self) -> float:
        return float(sum(self.step_seconds))


# ---------------------------------------------------------------- models


@dataclass(frozen=True)
class Model:
    """A model kind bound to its architecture settings."""

    name: str
    config: CwCnnConfig | CwAtConfig

    def init(self, rng: np.random.Generator) -> Params:
        return init_cwcnn(self.config, rng) if self.name == "cwcnn" else init_cwat(self.config, rng)

    def forward(self, batch: ComplexBatch, params: Params, rng: np.random.Generator | None = None) -> Tensor:
        if self.name == "cwcnn":
            return cwcnn_forward(batch, params, self.config)
        mode = "train" if rng is not None else "eval"
        return cwat_forward(batch, params, self.config, mode=mode, rng=rng)

    def describe(self) -> dict[str, str]:
        out = {"model": self.name, "profile": ",".join(map(str, self.config.profile))}
        if self.name == "cwat":
            out["heads"] = str(self.config.heads)
            out["dropout"] = repr(self.config.dropout)
        else:
            out["activations"] = ",".join(self.config.activations)
            out["feature_map"] = self.config.feature_map
        return out


MODELS = ("cwcnn", "cwat")


def build_model(name: str, profile, **options) -> Model:
    if name == "cwcnn":
        return Model(name, CwCnnConfig(profile=tuple(profile), **options))
    if name == "cwat":
        return Model(name, CwAtConfig(profile=tuple(profile), **options))
    raise ValueError(f"unknown model {name!r}; valid models: {', '.join(MODELS)}")


@dataclass
class TrainedModel:
    model: Model
    params: Params
    target_shift: float = 0.0
    target_scale: float = 1.0


# ------------------------------------------------------------ optimisation


def sgd_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    velocity: Mapping[str, np.ndarray],
    config: OptimizerConfig,
) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """``v <- alpha v + g + lambda w``; ``w <- w - eta v``.  Returns new arrays."""
    if params.keys() != grads.keys() or params.keys() != velocity.keys():
        raise ValueError("params, grads and velocity must have the same names")
    new_w, new_v = {}, {}
    for name, w in params.items():
        w = np.asarray(w, dtype=np.float64)
        g = np.asarray(grads[name], dtype=np.float64)
        v = np.asarray(velocity[name], dtype=np.float64)
        if not w.shape == g.shape == v.shape:
            raise ValueError(f"shape mismatch for {name!r}: w {w.shape}, g {g.shape}, v {v.shape}")
        v = config.momentum * v + g
        if config.weight_decay:
            v = v + config.weight_decay * w
        new_v[name] = v
        new_w[name] = w - config.learning_rate * v
    return new_w, new_v


def _flat(x) -> Tensor:
    x = nx.as_tensor(x)
    return nx.reshape(x, (1, x.data.size))


def mse_loss(preds, targets) -> Tensor:
    """Mean squared residual, recorded on the active tape."""
    preds, targets = _flat(preds), _flat(targets)
    if preds.cols != targets.cols:
        raise ValueError(f"{preds.cols} predictions for {targets.cols} targets")
    if preds.cols == 0:
        raise ValueError("empty predictions")
    diff = nx.sub(preds, targets)
    return nx.scale(nx.sum_all(nx.hadamard(diff, diff)), 1.0 / preds.cols)


def rmse(preds, targets) -> float:
    p = np.asarray(preds.data if isinstance(preds, Tensor) else preds, dtype=np.float64).reshape(-1)
    t = np.asarray(targets.data if isinstance(targets, Tensor) else targets, dtype=np.float64).reshape(-1)
    if p.size != t.size:
        raise ValueError(f"{p.size} predictions for {t.size} targets")
    if p.size == 0:
        raise ValueError("empty predictions")
    return float(np.sqrt(np.mean((p - t) ** 2)))


def count_parameters(params: Mapping) -> int:
    return int(sum(np.asarray(getattr(v, "data", v)).size for v in params.values()))


def _seeded(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream,))))


def predict(trained: TrainedModel, data: Dataset | ComplexBatch) -> np.ndarray:
    """Predictions in target units, dropout off."""
    batch = data if isinstance(data, ComplexBatch) else ComplexBatch(data.complexes)
    out = trained.model.forward(batch, trained.params).data.reshape(-1)
    return out * trained.target_scale + trained.target_shift


def evaluate(trained: TrainedModel, data: Dataset) -> float:
    return rmse(predict(trained, data), data.targets)


def train_model(
    model: Model | str,
    train: Dataset,
    config: OptimizerConfig,
    test: Dataset | None = None,
    dropout_seed: int | None = None,
    standardize: bool = False,
    on_step: Callable[[int, float], None] | None = None,
) -> tuple[TrainedModel, TrainHistory]:
    """Full-batch training from He-style initialisation.

    ``config.seed`` drives initialisation; dropout draws come from
    ``dropout_seed`` (default: a separate stream of ``config.seed``).  With
    ``standardize`` the loss is computed on z-scored targets and predictions
    are mapped back, so reported RMSE stays in target units.
    """
    if isinstance(model, str):
        model = build_model(model, train.config.max_profile)
    if len(train) == 0:
        raise ValueError("empty training set")
    targets = np.asarray(train.targets, dtype=np.float64)
    shift, scale = 0.0, 1.0
    if standardize:
        shift = float(targets.mean())
        scale = float(targets.std()) or 1.0
    fit_targets = ((targets - shift) / scale).reshape(1, -1)

    params = model.init(_seeded(config.seed, 0))
    drop_rng = (
        np.random.Generator(np.random.PCG64(dropout_seed)) if dropout_seed is not None else _seeded(config.seed, 1)
    )
    batch = ComplexBatch(train.complexes)
    velocity = {k: np.zeros_like(t.data) for k, t in params.items()}
    history = TrainHistory(parameters=count_parameters(params))

    for step in range(1, config.steps + 1):
        start = time.perf_counter()
        with Tape() as tape:
            loss = mse_loss(model.forward(batch, params, drop_rng), fit_targets)
        value = loss.item()
        if not math.isfinite(value):
            raise NonFiniteLossError(step, value)
        grads = tape.backward(loss)
        arrays = {k: t.data for k, t in params.items()}
        g = {k: grads.get(t, np.zeros_like(t.data)) for k, t in params.items()}
        arrays, velocity = sgd_step(arrays, g, velocity, config)
        for k, t in params.items():
            t.data = arrays[k]
        history.losses.append(value)
        history.step_seconds.append(time.perf_counter() - start)
        if on_step is not None:
            on_step(step, value)

    trained = TrainedModel(model, params, shift, scale)
    if test is not None and len(test):
        history.test_rmse = evaluate(trained, test)
    return trained, history


# ------------------------------------------------------------------ files


def save_history(history: TrainHistory, path: str | Path) -> None:
    lines = ["step,loss"]
    lines += [f"{i},{loss!r}" for i, loss in enumerate(history.losses, 1)]
    lines.append(f"test_rmse,{history.test_rmse!r}")
    lines.append(f"parameters,{history.parameters}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


PARAMS_MAGIC = "CWPM"
PARAMS_VERSION = 1


def dumps_params(trained: TrainedModel) -> str:
    """``CWPM 1``, ``#`` metadata lines, then one ``tensor`` block per parameter."""
    meta = trained.model.describe()
    meta["target_shift"] = repr(trained.target_shift)
    meta["target_scale"] = repr(trained.target_scale)
    lines = [f"{PARAMS_MAGIC} {PARAMS_VERSION}"]
    lines += [f"# {k}={v}" for k, v in meta.items()]
    for name, t in trained.params.items():
        rows, cols = t.shape
        lines.append(f"tensor {name} {rows} {cols}")
        lines += [" ".join(repr(float(x)) for x in row) for row in t.data]
    return "\n".join(lines) + "\n"


def save_params(trained: TrainedModel, path: str | Path) -> None:
    Path(path).write_text(dumps_params(trained), encoding="utf-8")


def _model_from_meta(meta: dict[str, str]) -> Model:
    name = meta.get("model")
    if name not in MODELS:
        raise ParamsFormatError(f"metadata names unknown model {name!r}")
    profile = tuple(int(x) for x in meta["profile"].split(","))
    if name == "cwat":
        return build_model(name, profile, heads=int(meta.get("heads", 2)), dropout=float(meta.get("dropout", 0.1)))
    acts = tuple(meta["activations"].split(",")) if meta.get("activations") else ()
    return build_model(name, profile, activations=acts, feature_map=meta.get("feature_map", "identity"))


def loads_params(text: str) -> TrainedModel:
    lines = text.splitlines()
    if not lines or lines[0].split() != [PARAMS_MAGIC, str(PARAMS_VERSION)]:
        head = lines[0] if lines else ""
        raise ParamsFormatError(f"line 1: expected '{PARAMS_MAGIC} {PARAMS_VERSION}', got {head!r}")
    meta: dict[str, str] = {}
    arrays: dict[str, np.ndarray] = {}
    i = 1
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if not line:
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].strip().partition("=")
            if sep:
                meta[key.strip()] = value.strip()
            continue
        parts = line.split()
        if len(parts) != 4 or parts[0] != "tensor":
            raise ParamsFormatError(f"line {i}: expected 'tensor <name> <rows> <cols>', got {line!r}")
        try:
            rows, cols = int(parts[2]), int(parts[3])
        except ValueError:
            raise ParamsFormatError(f"line {i}: bad tensor shape {parts[2:]}") from None
        if rows < 0 or cols < 0:
            raise ParamsFormatError(f"line {i}: negative tensor shape")
        if i + rows > len(lines):
            raise ParamsFormatError(f"line {i}: tensor {parts[1]!r} truncated")
        try:
            data = np.array([[float(x) for x in lines[i + r].split()] for r in range(rows)], dtype=np.float64)
        except ValueError as exc:
            raise ParamsFormatError(f"tensor {parts[1]!r}: {exc}") from None
        if rows and data.shape != (rows, cols):
            raise ParamsFormatError(f"tensor {parts[1]!r}: expected {cols} values per row")
        arrays[parts[1]] = data.reshape(rows, cols)
        i += rows
    model = _model_from_meta(meta)
    params = model.init(np.random.default_rng(0))
    if params.keys() != arrays.keys():
        missing = sorted(params.keys() - arrays.keys())
        extra = sorted(arrays.keys() - params.keys())
        raise ParamsFormatError(f"tensor names do not match the model: missing {missing}, unexpected {extra}")
    for name, arr in arrays.items():
        if arr.shape != params[name].shape:
            raise ParamsFormatError(f"tensor {name!r}: shape {arr.shape}, model expects {params[name].shape}")
        params[name].data = arr
    return TrainedModel(
        model,
        params,
        float(meta.get("target_shift", 0.0)),
        float(meta.get("target_scale", 1.0)),
    )


def load_params(path: str | Path) -> TrainedModel:
    return loads_params(Path(path).read_text(encoding="utf-8"))
