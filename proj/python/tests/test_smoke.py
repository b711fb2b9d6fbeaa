# Copyright 2026 The lrdm-lab Authors
# SPDX-License-Identifier: Apache-2.0

import math

import pytest

import lrdm

TINY = {
    "world.categories": "4",
    "world.colors": "3",
    "world.max_count": "3",
    "world.materials": "3",
    "world.settings": "3",
    "world.train_tuples": "96",
    "world.val_queries": "24",
    "world.val_gallery": "48",
    "world.test_queries": "32",
    "world.test_gallery": "64",
    "model.d_model": "12",
    "model.n_blocks": "2",
    "model.max_len": "14",
    "model.rank": "3",
    "pretrain.steps": "30",
    "pretrain.batch_size": "16",
    "pretrain.holdout": "20",
    "train.steps": "20",
    "train.batch_size": "16",
    "train.warmup_steps": "4",
    "probe.batches": "4",
    "probe.batch_size": "16",
    "probe.seeds": "2",
    "ablate.seeds": "2",
    "sweep.alpha_grid": "0,0.5,1",
    "run.seed": "11",
}


def tiny():
    c = lrdm.Config()
    for k, v in TINY.items():
        c.set(k, v)
    c.validate()
    return c


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    lrdm.Pipeline(tiny(), d).run_all()
    return d


def test_config_hash_ignores_output_dir():
    a, b = tiny(), tiny()
    b.output_dir = "/somewhere/else"
    assert a.hash() == b.hash()
    b.set("train.steps", "21")
    assert a.hash() != b.hash()


def test_bad_key_raises_with_code():
    with pytest.raises(lrdm.LrdmError) as err:
        lrdm.Config().set("train.nope", "1")
    assert err.value.code == "ConfigInvalid"


def test_report(run_dir):
    report = lrdm.build_report(run_dir)
    assert report["config_hash"] == tiny().hash()
    assert "probe.csv" in report["artifacts"]
    assert lrdm.build_report(run_dir) == report


def test_missing_artifact(tmp_path):
    with pytest.raises(lrdm.LrdmError) as err:
        lrdm.Pipeline(tiny(), tmp_path).pretrain()
    assert err.value.code == "MissingArtifact"


def test_evaluate_merge_endpoints(run_dir):
    bench = run_dir / "benchmark_test.json"
    ckpt = run_dir / "train_decoupled.ckpt"
    end = lrdm.evaluate(bench, ckpt, branch="end")
    assert lrdm.evaluate(bench, ckpt, alpha=0.0) == end
    assert lrdm.evaluate(bench, ckpt, alpha=1.0) == lrdm.evaluate(bench, ckpt, branch="trans")
    merged = run_dir / "merged.ckpt"
    lrdm.merge_checkpoint(ckpt, 0.0, merged)
    assert lrdm.evaluate(bench, merged, branch="end") == end
    assert 0.0 <= end["r_at_1"] <= end["r_at_10"] <= 1.0


def test_ablate(tmp_path):
    p = lrdm.Pipeline(tiny(), tmp_path)
    p.gen()
    p.pretrain()
    rows = p.ablate()
    assert [r["label"] for r in rows] == [
        "Transition only",
        "Endpoint only",
        "Joint",
        "Joint+PCGrad",
        "Decoupled+LRDM",
    ]


def test_merge_rules():
    assert lrdm.ties_merge([[2.0, -3.0, 0.1], [1.5, 1.0, -0.2]], 2.0 / 3.0) == [1.75, -3.0, 0.0]
    assert lrdm.dare([1.0, 2.0, 3.0], 0.0, 5) == [1.0, 2.0, 3.0]
    out = lrdm.dare([4.0] * 1000, 0.5, 5)
    assert set(out) <= {0.0, 8.0}


def test_metrics_and_loss():
    assert lrdm.average_precision_at_k([1, 2, 3], [1, 3], 3) == pytest.approx((1 + 2 / 3) / 2)
    assert lrdm.recall_at_k([[5, 1], [2, 7]], [[1], [9]], 2) == 0.5
    loss, gq, gt, gtau = lrdm.endpoint_loss([[1.0, 0.0]], [[1.0, 0.0]], math.log(10.0))
    assert loss == pytest.approx(0.0)
    assert lrdm.sha256_hex("abc").startswith("ba7816bf")
