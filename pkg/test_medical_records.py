"""
Tests for medical record loading, synthesis and classifier export
"""

import json

import pytest

from bayes import CurrentState, posterior, train
from errors import DomainError, RecordFormatError
from medical_records import (
    LEVEL_COLUMNS, export_classifier, load_record, save_record, synthesize_record, write_classifier_json,
)


def _write(tmp_path, text, name="record.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_level_form(r1_record):
    assert len(r1_record) == 6
    assert [row.label for row in r1_record.rows] == ["yes", "yes", "no", "no", "no", "yes"]
    assert r1_record.rows[1].state == CurrentState.from_names("Normal", "Pre-hypertension", "Normal", "Heavy")


def test_load_raw_form_discretizes(fixtures_dir, caplog):
    record = load_record(fixtures_dir / "records" / "raw_30_days.csv")
    assert len(record) == 30
    assert "shorter than" not in caplog.text
    assert record.rows[0].state.to_names() == ["Optimal", "Normal", "Normal", "Light"]
    assert record.rows[1].state.to_names() == ["High", "High Hypertension", "High Hypertension", "Heavy"]
    assert record.rows[4].state.to_names() == ["High", "High Hypertension", "High Hypertension", "Heavy"]
    assert sum(row.label == "yes" for row in record.rows) == 10
    assert train(record).prior(0) == pytest.approx(1 / 3)


def test_short_record_warns(fixtures_dir, caplog):
    load_record(fixtures_dir / "records" / "r1.csv")
    assert "6 rows, shorter than the 30-day observation period" in caplog.text


def test_labels_are_case_insensitive(tmp_path):
    path = _write(tmp_path, "day,total_cholesterol,systolic_bp,diastolic_bp,cigarettes_per_day,stroke\n"
                            "1,180,110,70,0,YES\n"
                            "2,180,110,70,0, No\n")
    assert [row.label for row in load_record(path).rows] == ["yes", "no"]


@pytest.mark.parametrize("text", [
    "day,chol,sys,dia,smoke,stroke\n1,1,1,1,1,yes\n2,1,1,1,1,no\n",
    "day,total_cholesterol,systolic_bp,diastolic_bp,cigarettes_per_day,stroke\n"
    "1,180,110,70,0,maybe\n2,180,110,70,0,no\n",
    "day,total_cholesterol,systolic_bp,diastolic_bp,cigarettes_per_day,stroke\n"
    "1,180,110,70,-2,yes\n2,180,110,70,0,no\n",
    "day,total_cholesterol,systolic_bp,diastolic_bp,cigarettes_per_day,stroke\n"
    "1,high,110,70,0,yes\n2,180,110,70,0,no\n",
    "day,cholesterol_level,systolic_level,diastolic_level,smoking_level,stroke\n"
    "1,Very High,Normal,Normal,Light,yes\n2,Normal,Normal,Normal,Light,no\n",
    "day,cholesterol_level,systolic_level,diastolic_level,smoking_level,stroke\n"
    "one,Normal,Normal,Normal,Light,yes\n2,Normal,Normal,Normal,Light,no\n",
])
def test_malformed_records_are_rejected(tmp_path, text):
    with pytest.raises(RecordFormatError):
        load_record(_write(tmp_path, text))


def test_single_row_record_is_rejected(tmp_path):
    path = _write(tmp_path, "day,cholesterol_level,systolic_level,diastolic_level,smoking_level,stroke\n"
                            "1,Normal,Normal,Normal,Light,yes\n")
    with pytest.raises(RecordFormatError, match="at least 2 rows"):
        load_record(path)


def test_missing_record_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_record(tmp_path / "absent.csv")


def test_save_then_load_keeps_rows(r1_record, tmp_path):
    path = tmp_path / "saved.csv"
    save_record(r1_record, path)
    assert path.read_text().splitlines()[0] == ",".join(LEVEL_COLUMNS)
    assert load_record(path) == r1_record


def test_synthesize_is_deterministic():
    a = synthesize_record(8, 0.4)
    b = synthesize_record(8, 0.4)
    assert a == b
    assert len(a) == 30
    assert synthesize_record(9, 0.4) != a


def test_synthesize_extreme_rates():
    assert all(row.label == "yes" for row in synthesize_record(1, 1.0).rows)
    assert all(row.label == "no" for row in synthesize_record(1, 0.0, days=5).rows)


def test_synthesize_validation():
    with pytest.raises(DomainError):
        synthesize_record(1, 1.5)
    with pytest.raises(DomainError):
        synthesize_record(1, 0.5, days=1)


def test_synthetic_record_trains():
    record = synthesize_record(10, 0.4)
    state = CurrentState.from_names("High", "High Hypertension", "High Hypertension", "Heavy")
    assert 0.0 < posterior(train(record), state).delta < 1.0


def test_export_classifier(r1_record, tmp_path):
    clf = train(r1_record, smoothing=1.0)
    exported = export_classifier(clf)
    assert exported["class_counts"] == {"yes": 3, "no": 3}
    assert exported["priors"] == {"yes": 0.5, "no": 0.5}
    heavy = exported["features"]["smoking"]["Heavy"]
    assert heavy["yes"]["count"] == 3
    assert heavy["yes"]["probability"] == pytest.approx(4 / 6)
    assert heavy["no"]["probability"] == pytest.approx(1 / 6)

    path = tmp_path / "clf.json"
    write_classifier_json(clf, path)
    assert json.loads(path.read_text()) == json.loads(json.dumps(exported))
