import json
import math
import os
from pathlib import Path

import pytest

import lanemerge

FIXTURES = Path(os.environ.get("LANEMERGE_FIXTURES", Path(__file__).resolve().parents[2] / "tests" / "fixtures"))


def test_golden_lines_roundtrip_byte_for_byte():
    for path in sorted((FIXTURES / "golden").glob("*.ndjson")):
        line = path.read_text(encoding="utf-8")
        assert lanemerge.roundtrip_envelope(line) == line


def test_malformed_envelope_raises():
    with pytest.raises(lanemerge.WireError):
        lanemerge.roundtrip_envelope('{"msg_type":"Bogus"}')


def test_advance_matches_closed_form_and_stops():
    x, y, v = lanemerge.advance(0.0, 0.0, 10.0, 1.0, 0.0, 2.0)
    assert x == pytest.approx(22.0)
    assert v == pytest.approx(12.0)
    x, _, v = lanemerge.advance(0.0, 0.0, 10.0, -5.0, 0.0, 10.0)
    assert x == pytest.approx(10.0)
    assert v == 0.0


def test_extrapolate_dict():
    line = (FIXTURES / "golden" / "rud_update.ndjson").read_text(encoding="utf-8")
    rud = json.loads(line)["payload"]
    moved = lanemerge.extrapolate(rud, rud["timestamp"] + 1000)
    assert moved["timestamp"] == rud["timestamp"] + 1000
    assert moved["position"]["x"] == pytest.approx(rud["position"]["x"] + rud["speed"] + rud["acceleration"] / 2)


def test_percentile_and_ecdf():
    samples = [float(i) for i in range(1, 1001)]
    assert lanemerge.percentile(samples, 99.9) == 999.0
    values, fractions = lanemerge.ecdf([3.0, 1.0, 2.0, 2.0])
    assert values == [1.0, 2.0, 2.0, 3.0]
    assert fractions == [0.25, 0.75, 0.75, 1.0]
    with pytest.raises(ValueError):
        lanemerge.percentile([], 50)


def test_network_and_training(tmp_path):
    net = lanemerge.QNetwork("dueling", [21, 8], 5, 3)
    q = net.q_values([0.1] * 21)
    assert len(q) == 5 and all(math.isfinite(v) for v in q)
    result = lanemerge.train("dqn", steps=1500, instances=10, out=tmp_path / "m.lmqn")
    assert result["env_steps"] == 1500
    loaded = lanemerge.QNetwork.load(tmp_path / "m.lmqn")
    assert loaded.variant == "dqn"
    (tmp_path / "bad.lmqn").write_bytes(b"nope")
    with pytest.raises(lanemerge.CheckpointError):
        lanemerge.QNetwork.load(tmp_path / "bad.lmqn")


def test_stack_run_and_log_summary(tmp_path):
    lanemerge.train("dueling", steps=1500, instances=10, out=tmp_path / "m.lmqn")
    code, summary = lanemerge.run_stack(
        "[scenario]\nsynthetic_count = 3\n[world]\nmerges = 3\n", tmp_path / "m.lmqn", tmp_path / "run")
    assert code == 0
    assert summary["merges"]["total"] == 3
    again = lanemerge.summarize_logs(tmp_path / "run" / "logs.ndjson")
    assert again["merges"]["total"] == 3
    with pytest.raises(lanemerge.ConfigError):
        lanemerge.run_stack("[scenario]\nzones = many\n", tmp_path / "m.lmqn", tmp_path / "bad")


def test_synthetic_instances_are_deterministic():
    a = lanemerge.synthetic_instances(5, 3)
    assert a == lanemerge.synthetic_instances(5, 3)
    assert len(a) == 3 and len(a[0]["frames"]) == 70
