"""
Medical record ingestion and synthetic outpatient records
Reads the two accepted CSV forms and exports trained classifiers as JSON
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
import pandas as pd

from bayes import (
    CLASSES, FEATURE_DOMAINS, FEATURE_NAMES, CurrentState, MedicalRecord, RecordRow,
    TrainedClassifier, discretize,
)
from errors import DomainError, RecordFormatError

logger = logging.getLogger(__name__)

RAW_COLUMNS = ["day", "total_cholesterol", "systolic_bp", "diastolic_bp",
               "cigarettes_per_day", "stroke"]
LEVEL_COLUMNS = ["day", "cholesterol_level", "systolic_level", "diastolic_level",
                 "smoking_level", "stroke"]

OBSERVATION_DAYS = 30

# Class-conditional level probabilities used for synthetic records:
# the 'yes' class leans to the riskier end of every feature.
_SYNTHETIC_LEVEL_PROBS = {
    "yes": (0.15, 0.35, 0.50),
    "no": (0.50, 0.35, 0.15),
}


def load_record(path: Union[str, Path]) -> MedicalRecord:
    """Load a record CSV in raw-reading or level-name form"""
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, skipinitialspace=True)
    except FileNotFoundError:
        raise
    except Exception as e:
        logger.error(f"Could not read medical record {path}: {e}")
        raise RecordFormatError(f"{path}: {e}") from e

    columns = [c.strip() for c in frame.columns]
    frame.columns = columns
    if columns == RAW_COLUMNS:
        record = _rows_from_raw(frame, path)
    elif columns == LEVEL_COLUMNS:
        record = _rows_from_levels(frame, path)
    else:
        raise RecordFormatError(
            f"{path}: header {columns} matches neither {RAW_COLUMNS} nor {LEVEL_COLUMNS}")

    if len(record) < 2:
        raise RecordFormatError(f"{path}: a medical record needs at least 2 rows, got {len(record)}")
    if len(record) < OBSERVATION_DAYS:
        logger.warning(f"{path}: {len(record)} rows, shorter than the "
                       f"{OBSERVATION_DAYS}-day observation period")
    logger.info(f"Loaded medical record {path} ({len(record)} rows)")
    return record


def _parse_label(value: Any, path: Path, line: int) -> str:
    label = str(value).strip().lower()
    if label not in CLASSES:
        raise RecordFormatError(f"{path}:{line}: stroke must be yes/no, got {value!r}")
    return label


def _parse_day(value: Any, path: Path, line: int) -> int:
    try:
        return int(str(value).strip())
    except ValueError:
        raise RecordFormatError(f"{path}:{line}: day must be an integer, got {value!r}")


def _rows_from_raw(frame: pd.DataFrame, path: Path) -> MedicalRecord:
    rows = []
    for i, values in enumerate(frame.itertuples(index=False), start=2):
        try:
            readings = [float(values[j]) for j in range(1, 5)]
            state = discretize(*readings)
        except (ValueError, DomainError) as e:
            raise RecordFormatError(f"{path}:{i}: {e}") from e
        rows.append(RecordRow(_parse_day(values[0], path, i), state, _parse_label(values[5], path, i)))
    return MedicalRecord(tuple(rows))


def _rows_from_levels(frame: pd.DataFrame, path: Path) -> MedicalRecord:
    rows = []
    for i, values in enumerate(frame.itertuples(index=False), start=2):
        try:
            state = CurrentState.from_names(*[values[j] for j in range(1, 5)])
        except DomainError as e:
            raise RecordFormatError(f"{path}:{i}: {e}") from e
        rows.append(RecordRow(_parse_day(values[0], path, i), state, _parse_label(values[5], path, i)))
    return MedicalRecord(tuple(rows))


def save_record(record: MedicalRecord, path: Union[str, Path]):
    """Write the level-name form"""
    frame = pd.DataFrame(
        [[row.day, *row.state.to_names(), row.label] for row in record.rows],
        columns=LEVEL_COLUMNS,
    )
    frame.to_csv(path, index=False, lineterminator="\n")


def synthesize_record(seed: int, stroke_rate: float, days: int = OBSERVATION_DAYS) -> MedicalRecord:
    """Schema-compatible stand-in for a private cohort record"""
    if not 0.0 <= stroke_rate <= 1.0:
        raise DomainError(f"stroke_rate must be in [0, 1], got {stroke_rate}")
    if days < 2:
        raise DomainError(f"a record needs at least 2 days, got {days}")

    rng = np.random.default_rng(seed)
    rows = []
    for day in range(1, days + 1):
        label = "yes" if rng.random() < stroke_rate else "no"
        probs = _SYNTHETIC_LEVEL_PROBS[label]
        levels = [list(domain)[rng.choice(3, p=probs)] for domain in FEATURE_DOMAINS]
        rows.append(RecordRow(day, CurrentState(*levels), label))
    return MedicalRecord(tuple(rows))


def export_classifier(clf: TrainedClassifier) -> Dict[str, Any]:
    """Priors, smoothed conditionals and raw counts, keyed by level name"""
    features = {}
    for f, (name, domain) in enumerate(zip(FEATURE_NAMES, FEATURE_DOMAINS)):
        features[name] = {
            level.value: {
                cls: {
                    "count": int(clf.feature_counts[f, l, c]),
                    "probability": clf.conditional(f, l, c),
                }
                for c, cls in enumerate(CLASSES)
            }
            for l, level in enumerate(domain)
        }
    return {
        "smoothing": clf.smoothing,
        "class_counts": {cls: int(clf.class_counts[c]) for c, cls in enumerate(CLASSES)},
        "priors": {cls: clf.prior(c) for c, cls in enumerate(CLASSES)},
        "features": features,
    }


def write_classifier_json(clf: TrainedClassifier, path: Union[str, Path]):
    """Write export_classifier output as indented JSON"""
    try:
        with open(path, "w") as f:
            json.dump(export_classifier(clf), f, indent=2)
        logger.info(f"Exported classifier to {path}")
    except OSError as e:
        logger.error(f"Error exporting classifier: {e}")
        raise
