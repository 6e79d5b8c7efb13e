#!/usr/bin/env python3
"""End-to-end smoke test for the hagn_py extension module.

Build the module first (either profile works), then run this script:

    cargo build -p hagn-py
    python3 python/smoke_test.py

The script copies the built cdylib next to itself under the importable
name ``hagn_py.so`` if it is not already importable.
"""

import json
import math
import os
import shutil
import sys
import tempfile

HERE = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, HERE)


def ensure_module():
    try:
        import hagn_py  # noqa: F401
        return
    except ImportError:
        pass
    root = os.path.dirname(HERE)
    candidates = [
        os.path.join(root, "target", profile, "libhagn_py.so")
        for profile in ("release", "debug")
    ]
    built = [p for p in candidates if os.path.exists(p)]
    if not built:
        sys.exit("libhagn_py.so not found; run `cargo build -p hagn-py` first")
    newest = max(built, key=os.path.getmtime)
    shutil.copy2(newest, os.path.join(HERE, "hagn_py.so"))


ensure_module()

import numpy as np  # noqa: E402

import hagn_py  # noqa: E402

checks = 0


def ok(name):
    global checks
    checks += 1
    print(f"ok {checks} {name}")


# Measurement operators on numpy arrays.
x = np.arange(12, dtype=np.float32).reshape(3, 4) / 12.0
spec_id = json.dumps({"kind": "identity"})
y = hagn_py.measure(spec_id, x, seed=7)
assert y.shape == (3, 4) and np.array_equal(x, y)
ok("identity measurement returns the input unchanged")

spec_block = json.dumps({"kind": "block_pixel", "p": 0.5})
y = hagn_py.measure(spec_block, x, seed=7)
assert y.shape == x.shape
assert np.all((y == 0.0) | (y == x))
ok("block_pixel only zeroes entries")

spec_keep = json.dumps({"kind": "keep_patch", "k": 2})
assert hagn_py.output_shape(spec_keep, [3, 4]) == [3, 4]
spec_extract = json.dumps({"kind": "extract_patch", "k": 2})
assert hagn_py.output_shape(spec_extract, [3, 4]) == [2, 2]
kept = hagn_py.measure(spec_keep, x, seed=3)
patch = hagn_py.measure(spec_extract, x, seed=3)
assert kept[kept != 0.0].size <= 4 and patch.shape == (2, 2)
ok("keep_patch and extract_patch shapes")

# Uniqueness diagnostics.
report = hagn_py.identity_probability(spec_id, (2, 2), n_samples=200, seed=1)
assert report["identity_probability"] == 1.0
assert report["channel_injective"] is True
ok("identity is almost-surely invertible")

spec_heavy = json.dumps({"kind": "block_pixel", "p": 1.0})
report = hagn_py.identity_probability(spec_heavy, (2, 2), n_samples=200, seed=1)
assert report["identity_probability"] == 0.0
assert report["channel_injective"] is False
ok("p=1 pixel blocking destroys identifiability")

# Discrete minimax oracle.
K = [[0.75, 0.25], [0.25, 0.75]]
res = hagn_py.oracle(K, [0.5, 0.5], grid_step=0.01)
assert len(res["minimizers"]) == 1
assert np.allclose(res["minimizers"][0], [0.5, 0.5], atol=1e-9)
assert abs(res["value_at_optimum"] + 2.0 * math.log(2.0)) < 1e-10
assert np.allclose(res["optimal_discriminator"], [0.5, 0.5], atol=1e-12)
ok("oracle recovers the matched generator and -2 log 2 value")

assert hagn_py.js_divergence([0.3, 0.7], [0.3, 0.7]) == 0.0
ok("JS divergence of identical distributions is zero")

res = hagn_py.mixture(
    p2=1.0,
    channel_id=[[1.0, 0.0], [0.0, 1.0]],
    channel_noise=[[0.5, 0.5], [0.5, 0.5]],
    p_x_r=[0.8, 0.2],
)
assert res["agreement"] is True
assert np.allclose(res["mixture_minimizers"][0], [0.8, 0.2], atol=1e-9)
ok("pure-identity mixture recovers the real input distribution")

# Gradient checks on the randomized full pipeline.
err = hagn_py.gradcheck(trials=3, h=1e-5, seed=1)
assert err < 1e-5
ok(f"analytic gradients match finite differences (max rel err {err:.2e})")

# Dataset and image formats.
imgs = hagn_py.synth_rectangles(32, 16, 16, seed=9)
assert imgs.shape == (32, 16, 16)
assert set(np.unique(imgs)) == {0.0, 1.0}
assert 0.0 < imgs.mean() < 1.0
ok("rectangle dataset is binary with one bright region per image")

with tempfile.TemporaryDirectory() as tmp:
    pgm = os.path.join(tmp, "grid.pgm")
    hagn_py.write_pgm(imgs[:4], cols=2, path=pgm)
    with open(pgm, "rb") as f:
        assert f.read(2) == b"P5"
    ok("PGM grid export")

    # A 20-step training run, checkpointing, and bit-exact resume.
    cfg = {
        "mode": "ambient_hidden",
        "seed": 11,
        "steps": 20,
        "eval_every": 10,
        "batch_size": 8,
        "noise_dim": 8,
        "height": 8,
        "width": 8,
        "hidden_shape": [2, 4, 4],
        "dataset_size": 60,
        "dataset_spec": {"kind": "block_pixel", "p": 0.5},
        "spec_hidden": {"kind": "block_pixel", "p": 0.5},
    }
    trainer = hagn_py.Trainer(json.dumps(cfg))
    assert trainer.steps_done == 0
    assert trainer.image_shape == (8, 8)
    assert trainer.dataset_sizes == (48, 12)
    d_loss, g_loss = trainer.step()
    assert math.isfinite(d_loss) and math.isfinite(g_loss)
    log = trainer.run()
    assert trainer.steps_done == 20
    assert [row["step"] for row in log] == [10, 20]
    assert all(math.isfinite(row["mmd2"]) for row in log)
    ok("trainer steps, runs to completion, and logs metrics")

    metrics = trainer.evaluate(n_generated=200)
    assert 0.0 <= metrics["per_pixel_mean_error"] <= 1.0
    ok("holdout evaluation")

    samples = trainer.sample(n=6)
    assert samples.shape == (6, 8, 8)
    assert samples.min() >= 0.0 and samples.max() <= 1.0
    ok("sampling stays in the sigmoid range")

    ckpt = os.path.join(tmp, "state.hagn")
    trainer.save(ckpt)
    restored = hagn_py.Trainer.load(ckpt)
    assert restored.steps_done == 20
    assert np.array_equal(restored.sample(n=6), samples)
    assert json.loads(restored.config) == json.loads(trainer.config)
    ok("checkpoint round-trip reproduces samples and config")

    idx = os.path.join(tmp, "images.idx")
    quantized = np.round(imgs * 255.0).astype(np.uint8)
    with open(idx, "wb") as f:
        f.write((0x803).to_bytes(4, "big"))
        for dim in quantized.shape:
            f.write(dim.to_bytes(4, "big"))
        f.write(quantized.tobytes())
    loaded = hagn_py.load_idx_images(idx)
    assert loaded.shape == imgs.shape
    assert np.allclose(loaded, imgs)
    ok("IDX import round-trips the dataset")

print(f"smoke test passed ({checks} checks)")
