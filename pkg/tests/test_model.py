import numpy as np
import pytest

from oiqa_graph import autodiff as ad
from oiqa_graph.errors import ConfigError, FormatError
from oiqa_graph.features import backbone_forward
from oiqa_graph.geometry import build_graph
from oiqa_graph.model import (
    ModelConfig,
    forward,
    forward_with_gradients,
    init_params,
    load_params,
    pipeline,
    round_to_f32,
    save_params,
)
from oiqa_graph.training import synthetic_erp


@pytest.fixture(scope="module")
def desk():
    cfg = ModelConfig.desk()
    return cfg, init_params(cfg, seed=3)


@pytest.fixture
def erp(rng):
    return synthetic_erp(rng, 0.1, height=64)


def default_param_count():
    """Independent count for the default configuration."""
    bb = (32 * 3 * 64 + 32) + (64 * 32 * 4 + 64) + (128 * 64 * 4 + 128) + (128 * 128 * 9 + 128)
    d, h = 192, 48
    fcs = sum(c * d + d + d * h + h + h * d + d + 2 * 49 + 1 for c in (32, 64, 128, 128))
    gat = 3 * (768 * 768 + 4 * 384 + 2 * 768)
    enc = 2 * (4 * 768 + 4 * (768 * 768 + 768) + 768 * 3072 + 3072 + 3072 * 768 + 768)
    head = 768 * 256 + 256 + 256 + 1
    return bb + fcs + gat + enc + head


class TestConfig:
    def test_defaults(self):
        c = ModelConfig()
        assert (c.num_viewports, c.k, c.node_dim, c.heads, c.gat_layers, c.encoder_layers) == (20, 5, 768, 4, 3, 2)
        assert (c.fov, c.viewport_size, c.pe_frequencies) == (90.0, 224, 128)

    @pytest.mark.parametrize(
        "change",
        [dict(k=20), dict(k=0), dict(node_dim=770), dict(heads=5), dict(pe_frequencies=64),
         dict(viewport_size=100), dict(fov=150.0), dict(num_viewports=1)],
    )
    def test_invalid(self, change):
        with pytest.raises(ConfigError):
            ModelConfig(**change)

    def test_param_count(self):
        params = init_params(ModelConfig())
        assert sum(v.size for v in params.values()) == default_param_count()

    def test_init_is_seeded(self, desk):
        cfg, _ = desk
        a, b = init_params(cfg, seed=5), init_params(cfg, seed=5)
        assert all(np.array_equal(a[k], b[k]) for k in a)
        c = init_params(cfg, seed=6)
        assert not np.array_equal(a["gat.0.weight"], c["gat.0.weight"])


class TestForward:
    def test_deterministic(self, desk, erp):
        cfg, params = desk
        a, b = forward(erp, params, cfg), forward(erp, params, cfg)
        assert np.isfinite(a) and a == b

    def test_zero_head_gives_bias(self, desk, erp):
        cfg, params = desk
        p = dict(params)
        p["head.fc2.weight"] = np.zeros_like(p["head.fc2.weight"])
        p["head.fc2.bias"] = np.array([2.75])
        assert forward(erp, p, cfg) == 2.75

    def test_default_scale_smoke(self, rng):
        cfg = ModelConfig()
        pipe = pipeline(cfg)
        assert pipe.graph.num_nodes == 20
        assert pipe.graph.in_degree().min() >= 6
        assert pipe.position_codes.shape == (20, 768)
        params = init_params(cfg)
        erp = rng.uniform(size=(256, 512, 3))
        value = forward(erp, params, cfg)
        assert np.isfinite(value)

    def test_viewport_stack_input(self, desk, erp):
        cfg, params = desk
        pipe = pipeline(cfg)
        stack = pipe.viewports(erp)
        assert stack.shape == (6, 3, 32, 32)
        assert pipe.score(stack, params) == pipe.score(erp, params)

    def test_stage_map_input(self, desk, erp):
        cfg, params = desk
        pipe = pipeline(cfg)
        maps = [m.data for m in backbone_forward(pipe.viewports(erp), params)]
        assert pipe.score(maps, params) == pytest.approx(pipe.score(erp, params), abs=1e-12)

    def test_bad_stack_shape(self, desk):
        cfg, params = desk
        with pytest.raises(ConfigError):
            pipeline(cfg).score(np.zeros((5, 3, 32, 32)), params)

    def test_node_permutation_invariance(self, desk, erp, rng):
        cfg, params = desk
        pipe = pipeline(cfg)
        X = pipe.embeddings(pipe.prepare(erp), params).data
        perm = rng.permutation(cfg.num_viewports)
        g = build_graph(pipe.graph.coords[perm], cfg.k)
        a = float(pipe.score_embeddings(X, params).data)
        b = float(pipe.score_embeddings(X[perm], params, graph=g).data)
        assert abs(a - b) < 1e-9

    def test_stage_named_in_errors(self, desk):
        cfg, params = desk
        with pytest.raises(Exception, match=r"\[extract\]"):
            pipeline(cfg).score(np.full((64, 128, 3), np.nan), params)


class TestGradients:
    def test_keys_match(self, desk, erp):
        cfg, params = desk
        _, grads = forward_with_gradients([(erp, 3.0)], params, cfg)
        assert set(grads) == set(params)
        assert all(grads[k].shape == params[k].shape for k in params)

    def test_perfect_target_has_zero_gradient(self, desk, erp):
        cfg, params = desk
        target = forward(erp, params, cfg)
        loss, grads = forward_with_gradients([(erp, target)], params, cfg)
        assert loss == 0.0
        assert all(np.all(g == 0.0) for g in grads.values())

    def test_batch_is_mean(self, desk, erp, rng):
        cfg, params = desk
        other = synthetic_erp(rng, 0.2, height=64)
        la, ga = forward_with_gradients([(erp, 1.0)], params, cfg)
        lb, gb = forward_with_gradients([(other, 4.0)], params, cfg)
        l2, g2 = forward_with_gradients([(erp, 1.0), (other, 4.0)], params, cfg)
        assert l2 == pytest.approx((la + lb) / 2, rel=1e-12)
        for k in params:
            np.testing.assert_allclose(g2[k], (ga[k] + gb[k]) / 2, rtol=1e-9, atol=1e-14)

    def test_scalar_finite_difference(self, desk, erp):
        cfg, params = desk
        name, idx, h = "head.fc1.weight", (3, 2), 1e-5
        _, grads = forward_with_gradients([(erp, 2.0)], params, cfg)
        p = {k: v.copy() for k, v in params.items()}
        p[name][idx] += h
        up, _ = forward_with_gradients([(erp, 2.0)], p, cfg)
        p[name][idx] -= 2 * h
        down, _ = forward_with_gradients([(erp, 2.0)], p, cfg)
        assert grads[name][idx] == pytest.approx((up - down) / (2 * h), rel=1e-5)


class TestWeightsFile:
    def test_round_trip(self, desk, tmp_path):
        cfg, params = desk
        path = tmp_path / "w.oiqw"
        save_params(params, path)
        loaded = load_params(path, cfg)
        expected = round_to_f32(params)
        assert set(loaded) == set(params)
        assert all(np.array_equal(loaded[k], expected[k]) for k in params)
        save_params(loaded, tmp_path / "again.oiqw")
        assert (tmp_path / "again.oiqw").read_bytes() == path.read_bytes()

    def test_header(self, desk, tmp_path):
        cfg, params = desk
        path = tmp_path / "w.oiqw"
        save_params(params, path)
        data = path.read_bytes()
        assert data[:4] == b"OIQW"
        assert int.from_bytes(data[4:8], "little") == 1
        assert int.from_bytes(data[8:12], "little") == len(params)
        first = sorted(params)[0].encode()
        assert int.from_bytes(data[12:14], "little") == len(first)
        assert data[14 : 14 + len(first)] == first

    def test_truncated(self, desk, tmp_path):
        cfg, params = desk
        path = tmp_path / "w.oiqw"
        save_params(params, path)
        path.write_bytes(path.read_bytes()[:-7])
        with pytest.raises(FormatError):
            load_params(path, cfg)

    def test_trailing_bytes(self, desk, tmp_path):
        cfg, params = desk
        path = tmp_path / "w.oiqw"
        save_params(params, path)
        path.write_bytes(path.read_bytes() + b"\0")
        with pytest.raises(FormatError):
            load_params(path)

    def test_foreign_magic(self, tmp_path):
        path = tmp_path / "x.bin"
        path.write_bytes(b"\x89PNG" + bytes(40))
        with pytest.raises(FormatError):
            load_params(path)

    def test_config_mismatch(self, desk, tmp_path):
        cfg, params = desk
        path = tmp_path / "w.oiqw"
        save_params(params, path)
        with pytest.raises(FormatError):
            load_params(path, cfg.replace(head_hidden=8))
