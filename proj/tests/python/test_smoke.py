import math
import os
import pathlib

import pytest

import antidote

DATA = pathlib.Path(os.environ.get("ANTIDOTE_TEST_DATA_DIR", pathlib.Path(__file__).parent.parent / "data"))


def test_shingles_and_signature():
    assert antidote.shingles("A dog runs.", 2) == {"a dog", "dog runs"}
    sig = antidote.minhash_signature({"a b c", "b c d"}, 128, 3)
    assert len(sig) == 128
    assert antidote.jaccard_estimate(sig, sig, 3) == 1.0
    with pytest.raises(antidote.EmptyInput):
        antidote.shingles("?!", 3)


def test_deduplicate_merges_exact_copy():
    report = antidote.deduplicate([
        {"id": "a", "text": "a red car parked on the street"},
        {"id": "b", "text": "A red car, parked on the street."},
        {"id": "c", "text": "two cats asleep on a sofa"},
    ])
    assert report["retained_ids"] == ["a", "c"]


def test_dpo_identity_and_training():
    rec = {"policy_logprob_pos": -1.0, "policy_logprob_neg": -1.0, "ref_logprob_pos": -1.0, "ref_logprob_neg": -1.0}
    assert abs(antidote.dpo_loss([rec]) - math.log(2)) < 1e-12
    assert antidote.reward_margin(rec) == 0.0
    pairs = [{"chosen": [0, 1, 2, 3], "rejected": [4, 5, 6, 7]}] * 10
    out = antidote.train_toy(pairs, 8, 4, steps=50)
    assert len(out["trajectory"]) == 51
    assert out["trajectory"][-1]["loss"] < math.log(2)


def test_metrics():
    m = antidote.compute_metrics(
        [{"sample_id": "a", "predicted": "positive", "raw_reply": ""},
         {"sample_id": "b", "predicted": "negative", "raw_reply": ""}],
        {"a": "positive", "b": "negative"})
    assert m["f1"] == 1.0


def test_stub_conformance_every_role():
    for role in antidote.ROLES:
        assert antidote.conformance(role)["passed"], role


def test_stage_order_and_pool(tmp_path):
    cfg = DATA / "run_config.json"
    with pytest.raises(antidote.StageOrderError):
        antidote.run_stage("assess", cfg, workdir=tmp_path)
    s = antidote.run_stage("pool", cfg, workdir=tmp_path)
    assert not s["skipped"]
    assert antidote.run_stage("pool", cfg, workdir=tmp_path)["skipped"]
    assert len(antidote.manifest_digest(cfg, tmp_path)) == 64
