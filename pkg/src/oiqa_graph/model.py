"""End-to-end viewport-graph quality model.

Pipeline: Fibonacci centres -> gnomonic viewports -> backbone + FCS node
embeddings -> + spherical position code -> 3 GAT layers -> biased graph
transformer -> mean-pool -> MLP head -> scalar score.
"""

from __future__ import annotations

import contextlib
import dataclasses
import functools
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, FormatError, NumericError, OIQAError, ParameterError
from .features import backbone_forward, fcs_fuse, init_backbone, init_fcs, stage_shapes, xavier
from .gat import gat_forward, init_gat
from .geometry import build_graph
from .posenc import encode_positions
from .projection import as_erp, extract_all, viewport_stack
from .sampler import fibonacci_sample, points_xyz
from .transformer import graphormer_forward, init_transformer

WEIGHTS_MAGIC = b"OIQW"
WEIGHTS_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    num_viewports: int = 20
    k: int = 5
    node_dim: int = 768
    gat_layers: int = 3
    heads: int = 4
    encoder_layers: int = 2
    fov: float = 90.0
    viewport_size: int = 224
    pe_frequencies: int = 128
    backbone_channels: tuple = (32, 64, 128, 128)
    ca_reduction: int = 4
    sa_kernel: int = 7
    ffn_expansion: int = 4
    head_hidden: int = 256
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "backbone_channels", tuple(int(c) for c in self.backbone_channels))
        self.validate()

    def validate(self):
        if self.num_viewports < 2:
            raise ConfigError("num_viewports must be at least 2")
        if not 1 <= self.k < self.num_viewports:
            raise ConfigError(f"k must satisfy 1 <= k < num_viewports, got k={self.k}")
        if self.node_dim % 4:
            raise ConfigError("node_dim must be divisible by 4 (four fused stages)")
        if self.node_dim % self.heads:
            raise ConfigError(f"node_dim {self.node_dim} not divisible by heads {self.heads}")
        if 6 * self.pe_frequencies != self.node_dim:
            raise ConfigError(
                f"6 * pe_frequencies must equal node_dim ({6 * self.pe_frequencies} != {self.node_dim})"
            )
        if self.viewport_size % 32:
            raise ConfigError("viewport_size must be divisible by 32")
        if not 0 < self.fov <= 120:
            raise ConfigError("fov must lie in (0, 120]")
        if len(self.backbone_channels) != 4:
            raise ConfigError("backbone_channels needs four entries")

    @property
    def stage_dim(self) -> int:
        return self.node_dim // 4

    @classmethod
    def desk(cls, **overrides) -> "ModelConfig":
        """Reduced configuration used by gradient checks and desk-scale training."""
        base = dict(
            num_viewports=6,
            k=2,
            node_dim=24,
            gat_layers=3,
            heads=2,
            encoder_layers=1,
            viewport_size=32,
            pe_frequencies=4,
            backbone_channels=(8, 8, 16, 16),
            head_hidden=16,
        )
        base.update(overrides)
        return cls(**base)

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)


def init_params(config: ModelConfig, seed: int | None = None) -> dict:
    """Seeded initialisation; one seed fixes every tensor."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    C = config.node_dim
    params: dict = {}
    init_backbone(rng, config.backbone_channels, params)
    init_fcs(rng, config.backbone_channels, config.stage_dim, config.ca_reduction, config.sa_kernel, params)
    init_gat(rng, C, config.heads, config.gat_layers, out=params)
    init_transformer(rng, C, config.encoder_layers, config.ffn_expansion, out=params)
    params["head.fc1.weight"] = xavier(rng, (C, config.head_hidden), C, config.head_hidden)
    params["head.fc1.bias"] = np.zeros(config.head_hidden)
    params["head.fc2.weight"] = xavier(rng, (config.head_hidden, 1), config.head_hidden, 1)
    params["head.fc2.bias"] = np.zeros(1)
    return params


def param_shapes(config: ModelConfig) -> dict:
    return {k: v.shape for k, v in init_params(config).items()}


def check_params(params, config: ModelConfig) -> None:
    expected = param_shapes(config)
    missing = sorted(set(expected) - set(params))
    extra = sorted(set(params) - set(expected))
    if missing or extra:
        raise ParameterError(f"parameter names differ from config: missing {missing[:5]}, unexpected {extra[:5]}")
    for name, shape in expected.items():
        if tuple(np.shape(params[name])) != tuple(shape):
            raise ParameterError(f"{name}: shape {np.shape(params[name])}, config expects {shape}")


def regression_head(X, params):
    pooled = ad.mean(X, axis=0, keepdims=True)
    h = ad.gelu(ad.linear(pooled, params["head.fc1.weight"], params["head.fc1.bias"]))
    return ad.reshape(ad.linear(h, params["head.fc2.weight"], params["head.fc2.bias"]), ())


@contextlib.contextmanager
def stage(name):
    try:
        yield
    except OIQAError as exc:
        raise exc.with_stage(name)


def _finite(t, name):
    if not np.all(np.isfinite(ad.as_tensor(t).data)):
        raise NumericError(f"non-finite values after stage '{name}'").with_stage(name)
    return t


class Pipeline:
    """Caches everything that depends only on the config (centres, graph, position codes)."""

    def __init__(self, config: ModelConfig):
        self.config = config
        with stage("sample"):
            self.points = fibonacci_sample(config.num_viewports)
        with stage("graph"):
            self.graph = build_graph(self.points, config.k)
        self.position_codes = encode_positions(points_xyz(self.points), config.pe_frequencies)

    # input preparation

    def viewports(self, erp) -> np.ndarray:
        c = self.config
        with stage("extract"):
            return viewport_stack(extract_all(as_erp(erp), self.points, c.fov, c.viewport_size))

    def prepare(self, sample):
        """Normalise an input to either a viewport stack or a list of stage maps.

        Accepts an ERP image (H, W, 3), a viewport stack (V, 3, S, S), or four
        precomputed stage maps (each (V, C_i, h_i, w_i)).
        """
        if isinstance(sample, (list, tuple)):
            if len(sample) != 4:
                raise ConfigError("precomputed features must be four stage maps")
            return [np.asarray(m, dtype=np.float64) for m in sample]
        arr = np.asarray(sample)
        if arr.ndim == 4:
            V, S = self.config.num_viewports, self.config.viewport_size
            if arr.shape != (V, 3, S, S):
                raise ConfigError(f"viewport stack must be {(V, 3, S, S)}, got {arr.shape}")
            return arr.astype(np.float64)
        return self.viewports(arr)

    # differentiable path

    def embeddings(self, prepared, params):
        c = self.config
        if isinstance(prepared, list):
            maps = prepared
            expected = stage_shapes(c.viewport_size, c.backbone_channels)
            for m, (ch, h, w) in zip(maps, expected):
                if m.shape[1:] != (ch, h, w) or m.shape[0] != c.num_viewports:
                    raise ConfigError(f"stage map shape {m.shape} does not match {(c.num_viewports, ch, h, w)}")
        else:
            with stage("backbone"):
                maps = backbone_forward(prepared, params)
        with stage("fcs"):
            h = _finite(fcs_fuse(maps, params), "fcs")
        return ad.add(h, self.position_codes)

    def score_embeddings(self, X, params, graph=None):
        """Graph stages and head on (V, node_dim) position-augmented embeddings."""
        c = self.config
        graph = self.graph if graph is None else graph
        with stage("gat"):
            X = _finite(gat_forward(X, graph, params, c.heads, c.gat_layers), "gat")
        with stage("transformer"):
            X = _finite(
                graphormer_forward(X, graph.distances, graph.neighbors, params, c.heads, c.encoder_layers),
                "transformer",
            )
        with stage("head"):
            return _finite(regression_head(X, params), "head")

    def score_tensor(self, prepared, params):
        return self.score_embeddings(self.embeddings(prepared, params), params)

    def score(self, sample, params) -> float:
        return float(self.score_tensor(self.prepare(sample), params).data)

    def loss_and_grads(self, batch, params):
        """MSE over (prepared_input, target) pairs; returns (loss, grads)."""
        if not batch:
            raise ConfigError("batch must not be empty")
        tparams = {k: ad.Tensor(v, requires_grad=True) for k, v in params.items()}
        total = None
        for prepared, target in batch:
            err = ad.sub(self.score_tensor(prepared, tparams), float(target))
            sq = ad.mul(err, err)
            total = sq if total is None else ad.add(total, sq)
        loss = ad.mul(total, 1.0 / len(batch))
        if not np.isfinite(loss.data):
            raise NumericError("loss is not finite").with_stage("loss")
        loss.backward()
        grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in tparams.items()}
        return float(loss.data), grads


@functools.lru_cache(maxsize=8)
def pipeline(config: ModelConfig) -> Pipeline:
    return Pipeline(config)


def forward(erp, params, config: ModelConfig) -> float:
    """Quality score for one input (ERP image, viewport stack or stage maps)."""
    return pipeline(config).score(erp, params)


def forward_with_gradients(batch, params, config: ModelConfig):
    """(loss, gradient map) for a batch of (input, target) pairs under MSE."""
    pipe = pipeline(config)
    prepared = [(pipe.prepare(x), t) for x, t in batch]
    return pipe.loss_and_grads(prepared, params)


# weights file


def save_params(params, path) -> None:
    """Write tensors in name order as OIQW (little-endian f32 payload)."""
    names = sorted(params)
    chunks = [WEIGHTS_MAGIC, struct.pack("<II", WEIGHTS_VERSION, len(names))]
    for name in names:
        arr = np.asarray(params[name])
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_params(path, config: ModelConfig | None = None) -> dict:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read weights {path}: {exc}") from exc
    if data[:4] != WEIGHTS_MAGIC:
        raise FormatError(f"{path}: bad magic, not an OIQW weights file")
    try:
        version, count = struct.unpack_from("<II", data, 4)
        if version != WEIGHTS_VERSION:
            raise FormatError(f"{path}: unsupported weights version {version}")
        off = 12
        params = {}
        for _ in range(count):
            (n,) = struct.unpack_from("<H", data, off)
            off += 2
            name = data[off : off + n].decode("utf-8")
            if len(name.encode("utf-8")) != n:
                raise FormatError(f"{path}: truncated tensor name")
            off += n
            (rank,) = struct.unpack_from("<B", data, off)
            off += 1
            dims = struct.unpack_from(f"<{rank}I", data, off)
            off += 4 * rank
            size = int(np.prod(dims, dtype=np.int64))
            if off + 4 * size > len(data):
                raise FormatError(f"{path}: truncated data for tensor {name}")
            params[name] = np.frombuffer(data, "<f4", size, off).reshape(dims).astype(np.float64)
            off += 4 * size
    except struct.error as exc:
        raise FormatError(f"{path}: truncated weights file") from exc
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: tensor name is not UTF-8") from exc
    if off != len(data):
        raise FormatError(f"{path}: {len(data) - off} trailing bytes")
    if config is not None:
        try:
            check_params(params, config)
        except ParameterError as exc:
            raise FormatError(f"{path}: {exc}") from exc
    return params


def round_to_f32(params) -> dict:
    """Parameters as they survive a save/load round trip."""
    return {k: np.asarray(v, dtype=np.float32).astype(np.float64) for k, v in params.items()}
