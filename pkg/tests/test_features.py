import math

import numpy as np
import pytest

from oiqa_graph import autodiff as ad
from oiqa_graph.errors import ConfigError, FormatError, ParameterError
from oiqa_graph.features import (
    ExternalFeatures,
    backbone_forward,
    fcs_fuse,
    fcs_stage,
    init_backbone,
    init_fcs,
    read_stage_maps,
    stage_shapes,
    write_stage_maps,
)
from _gradutil import gradient_errors, projected


def sig(x):
    return 1.0 / (1.0 + math.exp(-x))


def fcs_stage_oracle(F, p, prefix):
    """Scalar-loop projection -> channel attention -> spatial attention -> GAP."""
    Cin, H, W = F.shape
    Wp, bp = p[prefix + "proj.weight"], p[prefix + "proj.bias"]
    C = Wp.shape[0]
    Y = [[[bp[c] + sum(Wp[c, ci, 0, 0] * F[ci, i, j] for ci in range(Cin)) for j in range(W)] for i in range(H)] for c in range(C)]
    g = [sum(Y[c][i][j] for i in range(H) for j in range(W)) / (H * W) for c in range(C)]
    f1, b1, f2, b2 = (p[prefix + k] for k in ("ca.fc1.weight", "ca.fc1.bias", "ca.fc2.weight", "ca.fc2.bias"))
    hid = [max(0.0, b1[h] + sum(g[c] * f1[c, h] for c in range(C))) for h in range(f1.shape[1])]
    ca = [sig(b2[c] + sum(hid[h] * f2[h, c] for h in range(len(hid)))) for c in range(C)]
    Y = [[[Y[c][i][j] * ca[c] for j in range(W)] for i in range(H)] for c in range(C)]
    mean_map = [[sum(Y[c][i][j] for c in range(C)) / C for j in range(W)] for i in range(H)]
    max_map = [[max(Y[c][i][j] for c in range(C)) for j in range(W)] for i in range(H)]
    sw, sb = p[prefix + "sa.weight"], p[prefix + "sa.bias"]
    k = sw.shape[-1]
    r = k // 2
    S = [[0.0] * W for _ in range(H)]
    for i in range(H):
        for j in range(W):
            acc = sb[0]
            for ch, m in enumerate((mean_map, max_map)):
                for u in range(k):
                    for v in range(k):
                        ii, jj = i + u - r, j + v - r
                        if 0 <= ii < H and 0 <= jj < W:
                            acc += sw[0, ch, u, v] * m[ii][jj]
            S[i][j] = sig(acc)
    return np.array([sum(Y[c][i][j] * S[i][j] for i in range(H) for j in range(W)) / (H * W) for c in range(C)])


@pytest.fixture
def toy_params(rng):
    p = init_fcs(rng, (3, 3, 3, 3), 4)
    # non-zero biases so every term of the oracle is exercised
    for k in p:
        if k.endswith("bias"):
            p[k] = rng.normal(scale=0.3, size=p[k].shape)
    return p


class TestBackbone:
    @pytest.mark.parametrize("size,expected", [(224, [28, 14, 7, 7]), (32, [4, 2, 1, 1])])
    def test_stage_sizes(self, rng, size, expected):
        p = init_backbone(rng, (4, 4, 8, 8), {})
        maps = backbone_forward(rng.uniform(size=(2, 3, size, size)), p)
        assert [m.shape[-1] for m in maps] == expected
        assert [m.shape[1] for m in maps] == [4, 4, 8, 8]
        assert [s[1] for s in stage_shapes(size, (4, 4, 8, 8))] == expected

    def test_zero_input_is_finite(self, rng):
        p = init_backbone(rng, (4, 4, 8, 8), {})
        for k in p:
            if k.endswith("bias"):
                p[k] = np.full(p[k].shape, 0.1)
        maps = backbone_forward(np.zeros((1, 3, 32, 32)), p)
        assert all(np.all(np.isfinite(m.data)) for m in maps)
        # bias-only response: constant per channel
        assert np.allclose(maps[0].data, maps[0].data[:, :, :1, :1])

    def test_size_not_divisible(self, rng):
        p = init_backbone(rng, (4, 4, 8, 8), {})
        with pytest.raises(ConfigError):
            backbone_forward(np.zeros((1, 3, 48, 48)), p)


class TestFcs:
    def test_scalar_loop_oracle(self, rng, toy_params):
        F = rng.normal(size=(1, 3, 2, 2))
        got = fcs_stage(F, toy_params, "fcs.0.").data[0]
        np.testing.assert_allclose(got, fcs_stage_oracle(F[0], toy_params, "fcs.0."), atol=1e-12)

    def test_fuse_concatenates_stages(self, rng, toy_params):
        maps = [rng.normal(size=(2, 3, s, s)) for s in (4, 2, 1, 1)]
        fused = fcs_fuse(maps, toy_params).data
        assert fused.shape == (2, 16)
        for i, m in enumerate(maps):
            np.testing.assert_allclose(fused[:, 4 * i : 4 * i + 4], fcs_stage(m, toy_params, f"fcs.{i}.").data)

    def test_identity_gates_give_gap_of_projection(self, rng, toy_params):
        F = rng.normal(size=(1, 3, 3, 3))
        got = fcs_stage(F, toy_params, "fcs.1.", gates=False).data[0]
        proj = ad.conv2d(F, toy_params["fcs.1.proj.weight"], toy_params["fcs.1.proj.bias"]).data[0]
        np.testing.assert_allclose(got, proj.mean(axis=(1, 2)), atol=1e-14)

    def test_constant_map_identity_projection(self):
        p = init_fcs(np.random.default_rng(0), (3, 3, 3, 3), 3)
        p["fcs.0.proj.weight"] = np.eye(3).reshape(3, 3, 1, 1)
        p["fcs.0.proj.bias"] = np.zeros(3)
        F = np.full((1, 3, 4, 4), 0.625)
        assert np.all(fcs_stage(F, p, "fcs.0.", gates=False).data == 0.625)

    def test_gates_in_open_unit_interval(self, rng, toy_params):
        _, ca, sa = fcs_stage(rng.normal(size=(3, 3, 4, 4)), toy_params, "fcs.0.", return_gates=True)
        for g in (ca.data, sa.data):
            assert np.all(g > 0) and np.all(g < 1)

    def test_gap_permutation_invariant(self, rng, toy_params):
        p = dict(toy_params)
        F = rng.normal(size=(1, 3, 2, 2))
        a = fcs_stage(F, p, "fcs.0.", gates=False).data
        b = fcs_stage(F[:, :, ::-1, ::-1].copy(), p, "fcs.0.", gates=False).data
        np.testing.assert_allclose(a, b, atol=1e-14)

    def test_gradients_match_finite_differences(self, rng, toy_params):
        maps = {f"F{i}": rng.normal(size=(1, 3, 2, 2)) for i in range(4)}

        def fn(p):
            return projected(fcs_fuse([p[f"F{i}"] for i in range(4)], p))

        errors = gradient_errors(fn, {**toy_params, **maps})
        assert max(errors.values()) < 1e-3, {k: v for k, v in errors.items() if v >= 1e-3}

    def test_channel_mismatch(self, rng, toy_params):
        with pytest.raises(ParameterError):
            fcs_stage(rng.normal(size=(1, 5, 2, 2)), toy_params, "fcs.0.")


class TestExternalFeatures:
    def test_roundtrip(self, tmp_path, rng):
        maps = [rng.normal(size=s).astype(np.float32) for s in ((4, 4, 4), (6, 2, 2), (8, 1, 1), (8, 1, 1))]
        write_stage_maps(tmp_path / "vp_0.oiqf", maps)
        back = read_stage_maps(tmp_path / "vp_0.oiqf")
        for a, b in zip(maps, back):
            assert np.array_equal(a.astype(np.float64), b)

    def test_header_layout(self, tmp_path):
        write_stage_maps(tmp_path / "f", [np.zeros((1, 1, 1), np.float32)] * 4)
        raw = (tmp_path / "f").read_bytes()
        assert raw[:4] == b"OIQF"
        assert int.from_bytes(raw[4:8], "little") == 1
        assert len(raw) == 8 + 48 + 16

    @pytest.mark.parametrize("mutate", ["magic", "truncate", "trailing"])
    def test_bad_files(self, tmp_path, mutate):
        write_stage_maps(tmp_path / "f", [np.ones((2, 2, 2), np.float32)] * 4)
        raw = (tmp_path / "f").read_bytes()
        raw = {"magic": b"XXXX" + raw[4:], "truncate": raw[:-3], "trailing": raw + b"\0"}[mutate]
        (tmp_path / "f").write_bytes(raw)
        with pytest.raises(FormatError):
            read_stage_maps(tmp_path / "f")

    def test_provider_stacks_viewports(self, tmp_path, rng):
        paths = []
        for v in range(3):
            write_stage_maps(tmp_path / f"vp_{v}", [rng.normal(size=(2, 4, 4))] + [rng.normal(size=(2, 1, 1))] * 3)
            paths.append(tmp_path / f"vp_{v}")
        maps = ExternalFeatures(paths)()
        assert maps[0].shape == (3, 2, 4, 4)
