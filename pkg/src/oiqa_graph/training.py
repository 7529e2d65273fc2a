"""Dataset manifests, AdamW, the training loop and IQA correlation metrics."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigError, InputError, MetricError, ParameterError
from .model import ModelConfig, init_params, pipeline
from .projection import load_erp, save_png

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    batch_size: int = 4
    epochs: int = 30
    max_steps: int | None = None
    logistic_plcc: bool = False

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        base = dict(lr=3e-3, weight_decay=0.0, epochs=125, max_steps=500)
        base.update(overrides)
        return cls(**base)


# metrics


def _vectors(pred, truth, min_len):
    p = np.asarray(pred, dtype=np.float64).ravel()
    t = np.asarray(truth, dtype=np.float64).ravel()
    if p.shape != t.shape:
        raise MetricError(f"length mismatch: {p.size} predictions, {t.size} targets")
    if p.size < min_len:
        raise MetricError(f"need at least {min_len} values, got {p.size}")
    return p, t


def _pearson(p, t):
    pc, tc = p - p.mean(), t - t.mean()
    sp, st = math.sqrt(pc @ pc), math.sqrt(tc @ tc)
    if sp == 0.0 or st == 0.0:
        raise MetricError("correlation undefined: a vector has zero variance")
    return float(np.clip((pc @ tc) / (sp * st), -1.0, 1.0))


def plcc(pred, truth) -> float:
    return _pearson(*_vectors(pred, truth, 2))


def srcc(pred, truth) -> float:
    """Pearson correlation of average (fractional) ranks."""
    p, t = _vectors(pred, truth, 2)
    return _pearson(rankdata(p, method="average"), rankdata(t, method="average"))


def rmse(pred, truth) -> float:
    p, t = _vectors(pred, truth, 1)
    d = p - t
    return math.sqrt(float(d @ d) / d.size)


def logistic_fit(pred, truth):
    """Four-parameter logistic remap of predictions, sometimes applied before PLCC."""
    from scipy.optimize import curve_fit

    p, t = _vectors(pred, truth, 4)

    def f(x, b1, b2, b3, b4):
        return (b1 - b2) / (1.0 + np.exp(-(x - b3) / abs(b4))) + b2

    beta0 = [t.max(), t.min(), p.mean(), p.std() or 1.0]
    beta, _ = curve_fit(f, p, t, p0=beta0, maxfev=20000)
    return f(p, *beta)


# optimizer


@dataclass
class OptimizerState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def adamw_step(params, grads, state: OptimizerState, lr=1e-5, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.01):
    """One decoupled-weight-decay Adam update; returns (new params, state)."""
    if set(params) != set(grads):
        raise ParameterError("gradient names do not match parameter names")
    state.step += 1
    bc1 = 1.0 - beta1**state.step
    bc2 = 1.0 - beta2**state.step
    out = {}
    for name in sorted(params):
        p, g = np.asarray(params[name], dtype=np.float64), np.asarray(grads[name], dtype=np.float64)
        if p.shape != g.shape:
            raise ParameterError(f"{name}: parameter {p.shape} vs gradient {g.shape}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m, v = np.zeros_like(p), np.zeros_like(p)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        state.m[name], state.v[name] = m, v
        p = p * (1.0 - lr * weight_decay)
        out[name] = p - lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return out, state


# data


@dataclass(frozen=True)
class ManifestRow:
    path: Path
    mos: float
    split: str


def read_manifest(path) -> list[ManifestRow]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read manifest {path}: {exc}") from exc
    reader = csv.DictReader(text.splitlines())
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["path", "mos", "split"]:
        raise InputError(f"{path}: header must be 'path,mos,split'")
    rows = []
    for n, rec in enumerate(reader, start=2):
        img = Path(rec["path"])
        if not img.is_absolute():
            img = path.parent / img
        try:
            mos = float(rec["mos"])
        except (TypeError, ValueError):
            raise InputError(f"{path}:{n}: MOS {rec['mos']!r} is not a number") from None
        if not math.isfinite(mos):
            raise InputError(f"{path}:{n}: MOS must be finite")
        if not img.exists():
            raise InputError(f"{path}:{n}: image {img} does not exist")
        rows.append(ManifestRow(img, mos, (rec["split"] or "").strip()))
    return rows


def select_split(rows, split):
    if split in (None, "all"):
        return list(rows)
    return [r for r in rows if r.split == split]


def synthetic_erp(rng, level: float, height: int = 64) -> np.ndarray:
    """Smooth gradient + sinusoidal texture, degraded by Gaussian noise of std ``level``."""
    W = 2 * height
    y = np.linspace(0.0, 1.0, height)[:, None]
    x = np.linspace(0.0, 1.0, W, endpoint=False)[None, :]
    phase = rng.uniform(0, 2 * np.pi, size=3)
    base = np.stack(
        [0.5 + 0.25 * np.sin(2 * np.pi * (2 * x + y) + phase[c]) * np.cos(np.pi * 3 * y) for c in range(3)], axis=-1
    )
    noisy = base + rng.normal(scale=level, size=base.shape)
    return np.clip(noisy, 0.0, 1.0)


def make_synthetic_dataset(outdir, count=16, seed=0, height=64, mos_range=(1.0, 5.0), max_noise=0.3, test_fraction=0.0):
    """Write ``count`` PNG panoramas and a manifest; MOS falls linearly with noise."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    levels = np.linspace(0.0, max_noise, count)
    rng.shuffle(levels)
    lo, hi = mos_range
    n_test = int(round(test_fraction * count))
    lines = ["path,mos,split"]
    for i, level in enumerate(levels):
        name = f"erp_{i:03d}.png"
        save_png(synthetic_erp(rng, float(level), height), outdir / name)
        mos = hi - (hi - lo) * level / max_noise if max_noise > 0 else hi
        lines.append(f"{name},{mos:.6f},{'test' if i < n_test else 'train'}")
    manifest = outdir / "manifest.csv"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest


def fisher_yates(n: int, rng) -> list[int]:
    order = list(range(n))
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        order[i], order[j] = order[j], order[i]
    return order


@dataclass
class TrainResult:
    params: dict
    epoch_losses: list
    step_losses: list
    initial_loss: float


def train(rows, model_config: ModelConfig, train_config: TrainConfig = TrainConfig(), seed=0, params=None):
    """Deterministic AdamW/MSE training over manifest rows (or (image, mos) pairs).

    ``initial_loss`` is the full-set MSE before the first update.
    """
    rows = list(rows)
    if not rows:
        raise InputError("training set is empty")
    pipe = pipeline(model_config)
    init_ss, shuffle_ss = np.random.SeedSequence(seed).spawn(2)
    if params is None:
        params = init_params(model_config, seed=int(init_ss.generate_state(1)[0]))
    shuffle_rng = np.random.default_rng(shuffle_ss)
    data = [(pipe.prepare(_load(r)), _target(r)) for r in rows]
    initial_loss, _ = pipe.loss_and_grads(data, params)
    state = OptimizerState()
    tc = train_config
    step_losses, epoch_losses = [], []
    for epoch in range(tc.epochs):
        order = fisher_yates(len(data), shuffle_rng)
        losses = []
        for b in range(0, len(order), tc.batch_size):
            if tc.max_steps is not None and len(step_losses) >= tc.max_steps:
                break
            batch = [data[i] for i in order[b : b + tc.batch_size]]
            loss, grads = pipe.loss_and_grads(batch, params)
            params, state = adamw_step(params, grads, state, tc.lr, tc.beta1, tc.beta2, tc.eps, tc.weight_decay)
            losses.append(loss)
            step_losses.append(loss)
        if not losses:
            break
        epoch_losses.append(float(np.mean(losses)))
        log.info("epoch %d loss %.6f", epoch + 1, epoch_losses[-1])
    return TrainResult(params, epoch_losses, step_losses, initial_loss)


def _load(row):
    if isinstance(row, ManifestRow):
        return load_erp(row.path)
    return row[0]


def _target(row):
    return row.mos if isinstance(row, ManifestRow) else float(row[1])


def predict(rows, params, model_config: ModelConfig) -> np.ndarray:
    pipe = pipeline(model_config)
    return np.array([pipe.score(_load(r), params) for r in rows])


def evaluate(rows, params, model_config: ModelConfig, logistic=False) -> dict:
    rows = list(rows)
    if len(rows) < 2:
        raise InputError("evaluation needs at least two images")
    pred = predict(rows, params, model_config)
    truth = np.array([_target(r) for r in rows])
    lin = logistic_fit(pred, truth) if logistic else pred
    return {"PLCC": plcc(lin, truth), "SRCC": srcc(pred, truth), "RMSE": rmse(lin, truth)}


def config_keys():
    return {f.name for f in fields(ModelConfig)} | {f.name for f in fields(TrainConfig)}


def split_config(doc: dict, base_model: ModelConfig, base_train: TrainConfig):
    """Apply a flat JSON override document to model/train configs; unknown keys rejected."""
    model_keys = {f.name for f in fields(ModelConfig)}
    train_keys = {f.name for f in fields(TrainConfig)}
    unknown = sorted(set(doc) - model_keys - train_keys)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    try:
        m = base_model.replace(**{k: v for k, v in doc.items() if k in model_keys})
        t = TrainConfig(**{**base_train.__dict__, **{k: v for k, v in doc.items() if k in train_keys}})
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return m, t
