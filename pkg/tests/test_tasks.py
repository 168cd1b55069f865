from __future__ import annotations

import json

import pytest

from accelbench.errors import ParseError, SchemaError
from accelbench.tasks import (
    KeyAttributes,
    Manifest,
    ManifestEntry,
    load_manifest,
    load_task,
    save_manifest,
    save_task,
    task_from_dict,
    validate_attributes,
)

from conftest import make_attrs, make_task


def minimal_task_dict(**overrides):
    data = {
        "task_id": "t-min",
        "level": 1,
        "prompt": "build a plain StableDiffusionPipeline run",
        "reference_code": "pipe = StableDiffusionPipeline.from_pretrained('stable-diffusion-v1-5')",
        "ground_truth": make_attrs().to_dict(),
    }
    data.update(overrides)
    return data


def test_minimal_level1_defaults():
    spec = task_from_dict(minimal_task_dict())
    assert spec.level == 1
    assert spec.quality_threshold == 0.05
    assert spec.speedup_requirement is None
    assert spec.latency_bound is None


def test_level4_requires_speedup_requirement():
    data = minimal_task_dict(level=4, difficulty="medium")
    with pytest.raises(SchemaError) as err:
        task_from_dict(data)
    assert "speedup_requirement required at level 4" in str(err.value)
    assert err.value.field == "speedup_requirement"


def test_level5_requires_latency_bound():
    data = minimal_task_dict(level=5, difficulty="easy")
    with pytest.raises(SchemaError) as err:
        task_from_dict(data)
    assert err.value.field == "latency_bound"


def test_level_cross_field_invariants():
    with pytest.raises(SchemaError):
        task_from_dict(minimal_task_dict(speedup_requirement=2.0))
    with pytest.raises(SchemaError):
        task_from_dict(minimal_task_dict(latency_bound=3.0))
    with pytest.raises(SchemaError):
        task_from_dict(minimal_task_dict(difficulty="easy"))
    with pytest.raises(SchemaError):
        task_from_dict(
            minimal_task_dict(level=4, speedup_requirement=1.0, difficulty="easy")
        )
    with pytest.raises(SchemaError):
        task_from_dict(
            minimal_task_dict(level=4, speedup_requirement=2.0, difficulty="brutal")
        )


def test_quality_threshold_open_interval():
    for bad in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(SchemaError):
            task_from_dict(minimal_task_dict(quality_threshold=bad))


def test_unknown_keys_strict_vs_lenient():
    data = minimal_task_dict(surprise=1)
    with pytest.raises(SchemaError) as err:
        task_from_dict(data)
    assert err.value.field == "surprise"
    with pytest.warns(UserWarning):
        spec = task_from_dict(data, strict=False)
    assert spec.task_id == "t-min"


def test_malformed_file_is_parse_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json", "utf-8")
    with pytest.raises(ParseError):
        load_task(path)


def test_save_load_round_trip(tmp_path):
    for level in (1, 2, 3, 4, 5):
        attrs = make_attrs(
            accel_methods={"token_merging": {"merge_ratio": 0.3}} if level in (2, 3) else {}
        )
        task = make_task(level, attrs=attrs, task_id=f"round-{level}")
        path = tmp_path / f"{task.task_id}.json"
        save_task(task, path)
        loaded = load_task(path)
        assert loaded == task


def test_validate_attributes_accepts_valid():
    attrs = make_attrs(accel_methods={"token_merging": {"merge_ratio": 0.5}})
    assert validate_attributes(attrs) == []


def test_validate_attributes_resolution_rules():
    bad = make_attrs(resolution=(500, 512))
    violations = validate_attributes(bad)
    assert any("multiple of 8" in v.rule for v in violations)
    assert all(v.attribute == "resolution" for v in violations)
    out_of_range = make_attrs(resolution=(128, 512))
    assert any("outside" in v.rule for v in validate_attributes(out_of_range))


def test_validate_attributes_unknown_method():
    bad = make_attrs(accel_methods={"magic_skip": {"x": 1}})
    violations = validate_attributes(bad)
    assert len(violations) == 1
    assert "unknown method" in violations[0].rule


def test_validate_attributes_param_ranges():
    bad = make_attrs(
        accel_methods={
            "token_merging": {"merge_ratio": 1.0},
            "feature_reuse": {"cache_interval": 0},
        }
    )
    rules = {v.rule for v in validate_attributes(bad)}
    assert any("merge_ratio" in r for r in rules)
    assert any("cache_interval" in r for r in rules)


def test_validate_attributes_order_independent():
    a = make_attrs(
        preprocessors=frozenset({"canny_edge", "depth_map"}),
        accel_methods={"half_precision": {}, "token_merging": {"merge_ratio": 2.0}},
    )
    b = make_attrs(
        preprocessors=frozenset({"depth_map", "canny_edge"}),
        accel_methods={"token_merging": {"merge_ratio": 2.0}, "half_precision": {}},
    )
    assert validate_attributes(a) == validate_attributes(b)


def test_ground_truth_validated_at_load():
    data = minimal_task_dict()
    data["ground_truth"]["scheduler_class"] = "MysteryScheduler"
    with pytest.raises(SchemaError) as err:
        task_from_dict(data)
    assert "ground_truth" in (err.value.field or "")


def test_manifest_counts_and_round_trip(tmp_path):
    counts = {1: 41, 2: 116, 3: 261, 4: 93, 5: 93}
    entries = []
    i = 0
    for level, n in counts.items():
        for _ in range(n):
            entries.append(ManifestEntry(path=f"tasks/t{i}.json", level=level, task_id=f"t{i}"))
            i += 1
    manifest = Manifest(entries=tuple(entries))
    assert manifest.level_counts() == counts
    path = tmp_path / "manifest.json"
    save_manifest(manifest, path)
    loaded = load_manifest(path)
    assert loaded.level_counts() == counts
    assert loaded == manifest


def test_manifest_declared_counts_must_match(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text(
        json.dumps(
            {
                "tasks": [{"path": "a.json", "level": 1, "task_id": "a"}],
                "level_counts": {"1": 2},
            }
        ),
        "utf-8",
    )
    with pytest.raises(SchemaError):
        load_manifest(path)


def test_without_acceleration():
    attrs = make_attrs(accel_methods={"half_precision": {}})
    assert attrs.without_acceleration().accel_methods == {}
    assert attrs.accel_methods == {"half_precision": {}}
