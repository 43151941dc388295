import itertools
import json
import math
import os
import random
import shutil
import subprocess
from pathlib import Path

import pytest

import awrs

ROOT = Path(__file__).resolve().parents[2]
TINY_SPEC = ROOT / "tests" / "cli" / "tiny_spec.json"


def brute_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    if not pos or not neg:
        return None
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p, n in itertools.product(pos, neg))
    return wins / (len(pos) * len(neg))


def test_ratios_worked_examples():
    assert awrs.epi_ratio(50, 100) == 0.5
    assert awrs.avoidance_ratio(20, 50) == pytest.approx(0.6, abs=1e-15)
    assert awrs.epi_ratio(0, 0) == 0.0
    assert awrs.avoidance_ratio(0, 0) == 1.0


@pytest.mark.parametrize("D", [5, 7, 10, 15, 20])
def test_grid_bijection(D):
    seen = set()
    for e in range(D):
        for a in range(D):
            av_idx, epi_idx, flat = awrs.engagement_index((a + 0.5) / D, (e + 0.5) / D, D)
            assert (av_idx, epi_idx) == (a, e)
            assert flat == D * e + a
            assert awrs.engagement_cell(flat, D) == (a, e)
            seen.add(flat)
    assert seen == set(range(D * D))


def test_engagement_cell_out_of_range():
    with pytest.raises(awrs.AwrsError):
        awrs.engagement_cell(25, 5)


def test_metrics_against_brute_force():
    rng = random.Random(4)
    for _ in range(200):
        n = rng.randint(1, 12)
        scores = [rng.choice([0.0, 0.5, 1.0, rng.random()]) for _ in range(n)]
        labels = [int(rng.random() < 0.3) for _ in range(n)]
        want = brute_auc(scores, labels)
        got = awrs.auc(scores, labels)
        if want is None:
            assert got is None
        else:
            assert got == pytest.approx(want, abs=1e-12)


def test_metric_examples():
    assert awrs.auc([0.9, 0.1], [1, 0]) == 1.0
    assert awrs.mrr([0.2, 0.9, 0.5], [1, 0, 0]) == pytest.approx(1 / 3)
    assert awrs.ndcg([0.9, 0.1], [0, 1], 5) == pytest.approx(1 / math.log2(3))
    assert awrs.mrr([0.1, 0.2], [0, 0]) is None


def test_synth_stats_and_timeline(tmp_path):
    records = awrs.synth(TINY_SPEC, tmp_path / "corpus", seed=2)
    assert records > 0
    behaviors = tmp_path / "corpus" / "behaviors.tsv"
    n, buckets, skipped = awrs.stats(behaviors, 1800, 7, tmp_path / "stats")
    assert (n, skipped) == (records, 0)
    assert len(list((tmp_path / "stats").glob("grid_*.csv"))) == buckets

    tl = awrs.Timeline.from_behaviors(str(behaviors), 1800)
    assert len(tl) == buckets and tl.records == records
    last = tl.counts(len(tl) - 1)
    assert sum(e for e, _ in last.values()) >= tl.impressions(len(tl) - 1)
    for news_id, (exposures, clicks) in last.items():
        assert 0 <= clicks <= exposures
        assert tl.epi(len(tl) - 1, news_id) == awrs.epi_ratio(exposures, tl.impressions(len(tl) - 1))
        assert tl.avoidance(len(tl) - 1, news_id) == awrs.avoidance_ratio(clicks, exposures)
    for k in range(1, len(tl)):
        assert tl.impressions(k) >= tl.impressions(k - 1)
        assert tl.boundary(k) - tl.boundary(k - 1) == 1800


def tiny_train_config(tmp_path):
    awrs.synth(TINY_SPEC, tmp_path / "corpus")
    spec = json.loads(TINY_SPEC.read_text())
    start, width = 1573603200, 3600
    config = {
        "model": {
            "news": {"word_dim": 8, "news_dim": 8, "heads": 2, "attention_hidden": 4,
                     "category_dim": 3, "entity_dim": 2},
            "ue_dim": 4, "time_dim": 3, "user_heads": 3, "window": 1,
            "user_attention_hidden": 4, "history_len": 6,
        },
        "data": {
            "news": str(tmp_path / "corpus" / "news.tsv"),
            "behaviors": str(tmp_path / "corpus" / "behaviors.tsv"),
            "train_end": start + width * (spec["n_buckets"] - 2),
            "valid_end": start + width * (spec["n_buckets"] - 1),
        },
        "lr": 0.005, "negatives": 3, "max_epochs": 2, "seed": 5, "threads": 1,
    }
    path = tmp_path / "train.json"
    path.write_text(json.dumps(config))
    return path


def test_train_then_evaluate(tmp_path):
    config = tiny_train_config(tmp_path)
    out = awrs.train(config, tmp_path / "run")
    assert out["steps"] > 0
    assert Path(out["checkpoint"]).is_file()
    assert 0.0 <= out["test"]["auc"] <= 1.0
    again = awrs.evaluate(config, out["checkpoint"], tmp_path / "eval")
    assert again["auc"] == out["test"]["auc"]
    ablated = awrs.evaluate(config, out["checkpoint"], tmp_path / "eval_rel", mode="only_rel")
    assert ablated["scored"] == again["scored"]


def test_bad_mode_is_rejected(tmp_path):
    config = tiny_train_config(tmp_path)
    with pytest.raises(awrs.AwrsError):
        awrs.train(config, tmp_path / "run", mode="everything")


@pytest.mark.skipif(not os.environ.get("AWRS_CLI") and not shutil.which("awrs"), reason="awrs CLI not built")
def test_cli_matches_bindings(tmp_path):
    cli = os.environ.get("AWRS_CLI") or shutil.which("awrs")
    subprocess.run([cli, "synth", "--config", str(TINY_SPEC), "--seed", "2", "--out", str(tmp_path / "a")], check=True)
    awrs.synth(TINY_SPEC, tmp_path / "b", seed=2)
    for name in ("news.tsv", "behaviors.tsv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
