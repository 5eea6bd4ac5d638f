"""Smoke test for the asrl extension module.

Usage: test_smoke.py <dir-containing-module>
"""

import json
import math
import os
import shutil
import sys
import tempfile

sys.path.insert(0, sys.argv[1])

import numpy as np

import asrl

SMALL_RUN = {
    "objective": {"kind": "wgan_gp", "n_critic": 2},
    "generator": {"arch": "dcgan", "base_channels": 8},
    "discriminator": {"arch": "mlp", "mlp_hidden": 32, "use_batchnorm": False},
    "data": {"source": "synth:blobs:8", "label_size": 16, "crop_size": 16},
    "train": {"batch_size": 4, "total_g_iters": 3, "log_every": 1, "seed": 5},
}


def test_metrics():
    assert asrl.w1_exact_1d([0.0, 1.0], [0.0, 1.0]) == 0.0
    assert asrl.w1_exact_1d([0.0], [3.0]) == 3.0
    assert asrl.w1_exact_1d([1.0, 0.0], [2.0, 3.0]) == 2.0

    a = np.zeros((2, 3, 8, 8))
    assert asrl.psnr(a, a) == math.inf
    b = a + 1.0
    assert abs(asrl.psnr(a, b, 2.0) - 10.0 * math.log10(4.0)) < 1e-12

    up = asrl.bicubic_upsample_4x(np.full((1, 4, 4), 0.25))
    assert up.shape == (1, 16, 16)
    assert np.max(np.abs(up - 0.25)) < 1e-10

    down = asrl.block_downsample(np.arange(16.0).reshape(1, 4, 4), 2)
    assert down.shape == (1, 2, 2)
    assert down[0, 0, 0] == (0.0 + 1.0 + 4.0 + 5.0) / 4.0

    near = asrl.upsample_nearest(np.ones((2, 2, 2)), 3)
    assert near.shape == (2, 6, 6)

    gen = np.zeros((1, 3, 8, 8))
    z = asrl.block_downsample(gen, 4) + 0.5
    assert abs(asrl.l1_metric(gen, z) - 0.5) < 1e-12

    ma = asrl.moving_average([1.0, 2.0, 3.0], 2)
    assert ma == [1.0, 1.5, 2.5]

    batch = np.zeros((3, 1, 2, 2))
    batch[2] = 5.0
    assert abs(asrl.duplicate_rate(batch, 0.1) - 2.0 / 3.0) < 1e-12


def test_config():
    resolved = asrl.resolve_config(json.dumps(SMALL_RUN))
    doc = json.loads(resolved)
    assert doc["objective"]["kind"] == "wgan_gp"
    assert doc["optimizer"]["beta2"] == 0.9
    assert asrl.resolve_config(resolved) == resolved

    try:
        asrl.resolve_config('{"objective": {"kind": "vgan"}}')
    except ValueError as e:
        assert "objective.kind" in str(e)
    else:
        raise AssertionError("bad config accepted")


def test_cli_round_trip():
    work = tempfile.mkdtemp(prefix="asrl_py_")
    try:
        cfg = os.path.join(work, "run.json")
        with open(cfg, "w") as f:
            json.dump(SMALL_RUN, f)
        out = os.path.join(work, "run")
        assert asrl.run_cli(["train", "--config", cfg, "--out", out]) == 0

        log = os.path.join(out, "log.csv")
        with open(log) as f:
            lines = f.read().splitlines()
        assert lines[0] == "g_iter,j_d,j_g,l1_metric,wall_ms"
        assert len(lines) == 4

        ck = os.path.join(out, "checkpoint_final.bin")
        embedded = asrl.checkpoint_config(ck)
        assert embedded == asrl.resolve_config(embedded)

        report = os.path.join(work, "report")
        assert asrl.run_cli(
            ["eval", "--checkpoint", ck, "--data", "synth:checker:4", "--out", report]
        ) == 0
        with open(os.path.join(report, "report.json")) as f:
            keys = set(json.load(f).keys())
        assert "psnr_db" in keys and "duplicate_rate" in keys

        assert asrl.run_cli(["plot", "--log", log, "--out", os.path.join(work, "c.svg")]) == 0
        assert asrl.run_cli(["train", "--config", cfg]) == 1
    finally:
        shutil.rmtree(work, ignore_errors=True)


def test_toy_w1():
    rows = asrl.toy_w1(seed=3, shifts=[0.0, 1.0], critic_steps=60, batch=16,
                       hidden=16, oracle_samples=500)
    assert [r["shift"] for r in rows] == [0.0, 1.0]
    assert rows[0]["w1_exact"] == 0.0
    assert rows[1]["w1_exact"] == 1.0
    assert rows[1]["neg_j_d"] > rows[0]["neg_j_d"]


def main():
    test_metrics()
    test_config()
    test_cli_round_trip()
    test_toy_w1()
    print("python smoke: all checks passed")


if __name__ == "__main__":
    main()
