"""JSONL feature-record IO: round-trips, layout, and loud failure modes."""

import numpy as np
import pytest

from semshot.records import (
    FeatureRecord,
    batch_features,
    feature_dim,
    load_records,
    save_records,
)


def _sample():
    return [
        FeatureRecord(id="a", label="cat", feat=[1.0, 2.0, 3.0], reg=[0.1, 0.2, 0.3, 0.4]),
        FeatureRecord(id="b", label="dog", feat=[4.0, 5.0, 6.0]),
    ]


def test_round_trip(tmp_path):
    path = tmp_path / "records.jsonl"
    save_records(path, _sample())
    back = load_records(path)
    assert [r.id for r in back] == ["a", "b"]
    assert [r.label for r in back] == ["cat", "dog"]
    np.testing.assert_array_equal(back[0].feat, [1.0, 2.0, 3.0])
    np.testing.assert_array_equal(back[0].reg, [0.1, 0.2, 0.3, 0.4])
    assert back[1].reg is None


def test_batch_features_stacks_columns():
    x = batch_features(_sample())
    assert x.shape == (3, 2)
    np.testing.assert_array_equal(x[:, 0], [1.0, 2.0, 3.0])
    np.testing.assert_array_equal(x[:, 1], [4.0, 5.0, 6.0])
    assert x.flags["C_CONTIGUOUS"]


def test_feature_dim_and_empty_error():
    assert feature_dim(_sample()) == 3
    with pytest.raises(ValueError):
        feature_dim([])


def test_invalid_json_line_reports_line_number(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"id": "a", "label": "x", "feat": [1.0]}\n{nope\n')
    with pytest.raises(ValueError, match=":2"):
        load_records(path)


def test_missing_fields_reports_them(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"id": "a", "feat": [1.0]}\n')
    with pytest.raises(ValueError, match="label"):
        load_records(path)


def test_inconsistent_feature_dim_rejected(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(
        '{"id": "a", "label": "x", "feat": [1.0, 2.0]}\n'
        '{"id": "b", "label": "x", "feat": [1.0]}\n'
    )
    with pytest.raises(ValueError, match="dim"):
        load_records(path)


def test_blank_lines_skipped(tmp_path):
    path = tmp_path / "ok.jsonl"
    path.write_text('\n{"id": "a", "label": "x", "feat": [1.0]}\n\n')
    assert len(load_records(path)) == 1
