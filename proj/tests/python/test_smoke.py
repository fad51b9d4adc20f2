import numpy as np
import pytest

import shadownet as sn


def test_model_catalog():
    names = sn.model_names()
    assert "fig2" in names and "shortcut" in names
    g = sn.build_model("fig2", seed=3)
    assert g.input_shape == (16, 16, 3)
    assert "conv1" in g.layers
    assert len(g) == len(g.layers)


def test_convert_and_infer_matches_reference():
    g = sn.build_model("fig2", seed=3)
    a, b = sn.convert_model(g, sn.ObfuscationParams(seed=11))
    assert b.programs > 0 and b.mask_slots > 0

    s = sn.Session()
    s.init(a, b)
    rng = np.random.default_rng(0)
    x = rng.uniform(-1.0, 1.0, size=g.input_shape).astype(np.float32)

    s.round_begin(mask_seed=1, round=1)
    y = s.infer(x)
    ref = g.eval(x)
    assert y.shape == ref.shape
    assert np.abs(y - ref).sum() <= 1e-4 * np.abs(ref).sum()

    s.round_begin(mask_seed=1, round=2)
    y2, view = s.infer(x, record_view=True)
    assert np.abs(y - y2).max() <= 1e-5
    assert view["records"]
    masked = [r for r in view["records"] if r["masked"]]
    assert len(masked) == len(s.masked_layers)

    audit = sn.audit_view(view, g)
    assert audit["ok"]
    assert audit["min_masked_eta"] > 1e-2


def test_conv2d_against_numpy():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((5, 5, 3)).astype(np.float32)
    w = rng.standard_normal((3, 3, 3, 4)).astype(np.float32)
    y = sn.conv2d(x, w, stride=1, padding="valid")
    assert y.shape == (3, 3, 4)
    for i in range(3):
        for j in range(3):
            ref = np.einsum("hwc,hwcn->n", x[i : i + 3, j : j + 3, :], w)
            np.testing.assert_allclose(y[i, j], ref, rtol=1e-5, atol=1e-6)


def test_save_load_roundtrip(tmp_path):
    g = sn.build_model("shortcut", seed=5)
    a, b = sn.convert_model(g, sn.ObfuscationParams(seed=9))

    mp = str(tmp_path / "model.snm")
    ap = str(tmp_path / "part_a.snm")
    bp = str(tmp_path / "part_b.snm")
    sn.save_model(mp, g)
    sn.save_part_a(ap, a)
    sn.save_part_b(bp, b)
    assert sn.container_kind(mp) == "model"
    assert sn.container_kind(ap) == "part-a"
    assert sn.container_kind(bp) == "part-b"

    g2 = sn.load_model(mp)
    a2 = sn.load_part_a(ap)
    b2 = sn.load_part_b(bp)
    assert g2.layers == g.layers

    rng = np.random.default_rng(2)
    x = rng.uniform(-1.0, 1.0, size=g.input_shape).astype(np.float32)
    s = sn.Session()
    s.init(a2, b2)
    s.round_begin(mask_seed=4, round=1)
    y = s.infer(x)
    assert np.abs(y - g.eval(x)).sum() <= 1e-4 * np.abs(g.eval(x)).sum()

    tp = str(tmp_path / "x.snt")
    sn.save_tensor(tp, x)
    np.testing.assert_array_equal(sn.load_tensor(tp), x)


def test_verify_and_analysis_helpers():
    g = sn.build_model("fig1", seed=1)
    a, b = sn.convert_model(g, sn.ObfuscationParams(seed=2))
    rep = sn.verify_model(g, a, b, trials=10)
    assert rep["ok"]
    assert rep["max_eta"] <= 1e-4

    assert sn.expanded_kernel_count(64, 1.2) == 76
    assert sn.count_equivalent_params(g, 1.2) == (1984, 5120)
    assert sn.witness_class_count(76, 12) == 31022118677225


def test_bad_input_raises():
    g = sn.build_model("fig2", seed=3)
    a, b = sn.convert_model(g, sn.ObfuscationParams(seed=11))
    s = sn.Session()
    s.init(a, b)
    s.round_begin(mask_seed=1, round=1)
    with pytest.raises(sn.ShadownetError):
        s.infer(np.zeros((4, 4, 3), dtype=np.float32))
