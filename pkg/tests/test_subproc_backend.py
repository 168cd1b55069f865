from __future__ import annotations

import json
import sys

import pytest

from accelbench.backends.subproc import (
    MetricsRecord,
    SubprocessBackend,
    parse_metrics_record,
    serialize_metrics_record,
)
from accelbench.errors import BackendUnavailable, ParseError, SchemaError


def ok_record(**overrides) -> dict:
    data = {
        "schema": "accelbench.metrics_record/v1",
        "status": "ok",
        "latency_s": [0.51, 0.52, 0.5],
        "quality": [0.3, 0.3, 0.3],
        "failure_text": None,
        "hardware_tag": "gpu0",
        "seed": 11,
    }
    data.update(overrides)
    return data


def test_parse_and_serialize_round_trip():
    text = json.dumps(ok_record())
    record = parse_metrics_record(text)
    assert record.status == "ok"
    assert record.latency_s == (0.51, 0.52, 0.5)
    again = parse_metrics_record(serialize_metrics_record(record))
    assert again == record
    assert serialize_metrics_record(again) == serialize_metrics_record(record)


def test_parse_rejects_bad_records():
    with pytest.raises(ParseError):
        parse_metrics_record("not json")
    with pytest.raises(SchemaError):
        parse_metrics_record(json.dumps(ok_record(schema="other/v9")))
    with pytest.raises(SchemaError):
        parse_metrics_record(json.dumps(ok_record(status="confused")))
    with pytest.raises(SchemaError):
        parse_metrics_record(json.dumps(ok_record(latency_s=[])))
    with pytest.raises(SchemaError):
        parse_metrics_record(json.dumps(ok_record(latency_s=[0.5, 0.5])))
    with pytest.raises(SchemaError):
        parse_metrics_record(
            json.dumps(ok_record(status="runtime_failure", failure_text=None))
        )


def test_runtime_failure_record_needs_text_only():
    record = parse_metrics_record(
        json.dumps(
            ok_record(
                status="runtime_failure",
                latency_s=[],
                quality=[],
                failure_text="Traceback (most recent call last): boom",
            )
        )
    )
    assert record.status == "runtime_failure"
    assert "Traceback" in record.failure_text


FAKE_HARNESS = '''#!/usr/bin/env python3
"""Stand-in harness: emits a fixed record, failing when the candidate
source contains the word BOOM."""
import json
import sys

candidate, prompts = sys.argv[1], sys.argv[2]
n = int(sys.argv[sys.argv.index("--n") + 1])
seed = int(sys.argv[sys.argv.index("--seed") + 1])
source = open(candidate).read()
if "BOOM" in source:
    record = {
        "schema": "accelbench.metrics_record/v1",
        "status": "runtime_failure",
        "latency_s": [],
        "quality": [],
        "failure_text": "Traceback: injected BOOM",
        "hardware_tag": "fake",
        "seed": seed,
    }
else:
    record = {
        "schema": "accelbench.metrics_record/v1",
        "status": "ok",
        "latency_s": [0.01 * (i + 1) for i in range(n)],
        "quality": [0.3] * n,
        "failure_text": None,
        "hardware_tag": "fake",
        "seed": seed,
    }
print(json.dumps(record))
'''


@pytest.fixture()
def fake_backend(tmp_path) -> SubprocessBackend:
    harness = tmp_path / "fake_harness.py"
    harness.write_text(FAKE_HARNESS, "utf-8")
    prompts = tmp_path / "prompts.txt"
    prompts.write_text("a prompt\nanother prompt\n", "utf-8")
    return SubprocessBackend(
        [sys.executable, str(harness)], prompts_path=prompts, hardware_tag="fake"
    )


def test_subprocess_run_ok(fake_backend):
    result = fake_backend.run("print('hi')", None, 3, seed=5)
    assert result.ok
    assert result.latency == (0.01, 0.02, 0.03)
    assert result.quality == (0.3, 0.3, 0.3)


def test_subprocess_candidate_failure_is_data(fake_backend):
    result = fake_backend.run("BOOM = True", None, 2, seed=5)
    assert result.status == "runtime_failure"
    assert "BOOM" in result.failure_text


def test_subprocess_check_probe(fake_backend):
    assert fake_backend.check("print('ok')", {}).ok
    probe = fake_backend.check("BOOM = 1", {})
    assert not probe.ok
    assert "BOOM" in probe.error_text
    assert not fake_backend.check("", {}).ok


def test_missing_harness_is_backend_unavailable(tmp_path):
    backend = SubprocessBackend(
        ["/definitely/not/here"], prompts_path=tmp_path / "p.txt"
    )
    with pytest.raises(BackendUnavailable):
        backend.run("x = 1", None, 1, seed=0)


def test_harness_crash_is_backend_unavailable(tmp_path):
    harness = tmp_path / "broken_harness.py"
    harness.write_text("import sys; sys.exit(3)\n", "utf-8")
    backend = SubprocessBackend(
        [sys.executable, str(harness)], prompts_path=tmp_path / "p.txt"
    )
    with pytest.raises(BackendUnavailable):
        backend.run("x = 1", None, 1, seed=0)


def test_per_tag_serialization_lock_shared():
    from accelbench.backends import subproc

    a = subproc._lock_for("gpu-7")
    b = subproc._lock_for("gpu-7")
    c = subproc._lock_for("gpu-8")
    assert a is b
    assert a is not c
