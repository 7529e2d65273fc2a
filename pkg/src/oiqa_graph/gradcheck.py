"""Central finite-difference check of the model's analytic gradients."""

from __future__ import annotations

from collections import defaultdict

import numpy as np

from .model import ModelConfig, init_params, pipeline

STEP = 1e-4
TOLERANCE = 1e-3


def relative_error(analytic, numeric, floor=1e-6) -> float:
    """||a - n|| / max(||a||, ||n||, floor).

    The floor keeps identically-zero gradients (e.g. the key bias, which
    softmax shift invariance cancels) from dividing noise by noise.
    """
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(np.linalg.norm(a), np.linalg.norm(n), floor)
    return float(np.linalg.norm(a - n) / scale)


def param_group(name: str) -> str:
    """'gat.1.att' -> 'gat.1'; 'head.fc1.weight' -> 'head'."""
    parts = name.split(".")
    return ".".join(parts[:2]) if parts[1].isdigit() or parts[0] == "backbone" else parts[0]


def check_function(f, params, grads, entries=12, step=STEP, seed=0) -> dict:
    """Per-tensor relative error of ``grads`` against central differences of ``f``.

    ``f`` maps the (mutated in place) parameter dict to a scalar.  At most
    ``entries`` randomly chosen coordinates per tensor are probed.
    """
    rng = np.random.default_rng(seed)
    report = {}
    for name in sorted(params):
        p = params[name]
        flat = p.reshape(-1)
        picks = np.arange(flat.size) if flat.size <= entries else rng.choice(flat.size, entries, replace=False)
        numeric = np.empty(len(picks))
        for n, i in enumerate(picks):
            old = flat[i]
            flat[i] = old + step
            fp = f(params)
            flat[i] = old - step
            fm = f(params)
            flat[i] = old
            numeric[n] = (fp - fm) / (2.0 * step)
        report[name] = relative_error(np.asarray(grads[name]).reshape(-1)[picks], numeric)
    return report


def model_gradcheck(seed: int = 0, config: ModelConfig | None = None, entries: int = 12) -> dict:
    """Check every parameter tensor of the (desk) model on a seeded random ERP."""
    config = ModelConfig.desk() if config is None else config
    pipe = pipeline(config)
    params = init_params(config, seed=seed)
    rng = np.random.default_rng(seed + 1000)
    erp = rng.uniform(size=(64, 128, 3))
    prepared = pipe.prepare(erp)
    target = float(rng.uniform(1.0, 5.0))
    _, grads = pipe.loss_and_grads([(prepared, target)], params)

    def loss(p):
        return (pipe.score_tensor(prepared, p).data - target) ** 2

    return check_function(loss, params, grads, entries=entries, seed=seed)


def group_report(report: dict) -> dict:
    groups = defaultdict(float)
    for name, err in report.items():
        g = param_group(name)
        groups[g] = max(groups[g], err)
    return dict(sorted(groups.items()))
