"""
Naive Bayesian stroke-risk classifier
Discretizes sensor readings, trains on an outpatient's record and turns
the stroke posterior into an allocation priority weight
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from errors import DegenerateTrainingDataError, DomainError

logger = logging.getLogger(__name__)


class CholesterolLevel(Enum):
    """Total cholesterol bands (mg/dl)"""
    OPTIMAL = "Optimal"
    NORMAL = "Normal"
    HIGH = "High"


class BloodPressureLevel(Enum):
    """Systolic / diastolic bands (mmHg)"""
    NORMAL = "Normal"
    PRE_HYPERTENSION = "Pre-hypertension"
    HIGH_HYPERTENSION = "High Hypertension"


class SmokingLevel(Enum):
    """Cigarettes per day bands"""
    LIGHT = "Light"
    MODERATE = "Moderate"
    HEAVY = "Heavy"


FEATURE_NAMES = ("cholesterol", "systolic", "diastolic", "smoking")
FEATURE_DOMAINS = (CholesterolLevel, BloodPressureLevel, BloodPressureLevel, SmokingLevel)
CLASSES = ("yes", "no")
YES, NO = 0, 1


@dataclass(frozen=True)
class CurrentState:
    """One level per feature, f1..f4"""
    cholesterol: CholesterolLevel
    systolic: BloodPressureLevel
    diastolic: BloodPressureLevel
    smoking: SmokingLevel

    def __post_init__(self):
        for name, domain, level in zip(FEATURE_NAMES, FEATURE_DOMAINS, self.levels):
            if not isinstance(level, domain):
                raise DomainError(f"{name} level {level!r} is not in {domain.__name__}")

    @property
    def levels(self) -> Tuple[Enum, Enum, Enum, Enum]:
        """Feature levels in cholesterol, systolic, diastolic, smoking order"""
        return (self.cholesterol, self.systolic, self.diastolic, self.smoking)

    def level_indices(self) -> Tuple[int, ...]:
        """Zero-based index of each level within its feature domain"""
        return tuple(list(domain).index(level)
                     for domain, level in zip(FEATURE_DOMAINS, self.levels))

    @classmethod
    def from_names(cls, cholesterol: str, systolic: str, diastolic: str,
                   smoking: str) -> "CurrentState":
        """Build a state from level labels such as 'Pre-hypertension'"""
        names = (cholesterol, systolic, diastolic, smoking)
        levels = []
        for feature, domain, name in zip(FEATURE_NAMES, FEATURE_DOMAINS, names):
            try:
                levels.append(domain(str(name).strip()))
            except ValueError:
                allowed = [level.value for level in domain]
                raise DomainError(f"unknown {feature} level {name!r}; expected one of {allowed}")
        return cls(*levels)

    def to_names(self) -> List[str]:
        """Level names as they appear in records and state tables"""
        return [level.value for level in self.levels]


@dataclass(frozen=True)
class RecordRow:
    day: int
    state: CurrentState
    label: str

    def __post_init__(self):
        if self.label not in CLASSES:
            raise DomainError(f"class label must be one of {CLASSES}, got {self.label!r}")


@dataclass(frozen=True)
class MedicalRecord:
    """Per-day discretized feature rows with stroke labels"""
    rows: Tuple[RecordRow, ...]

    def __len__(self) -> int:
        return len(self.rows)


@dataclass(frozen=True, eq=False)
class TrainedClassifier:
    """Class counts and per-feature (level, class) count tables

    feature_counts has shape (4, 3, 2): feature, level index, class index
    (0 = yes, 1 = no). Probabilities are derived on demand.
    """
    class_counts: np.ndarray
    feature_counts: np.ndarray
    smoothing: float

    def __post_init__(self):
        class_counts = np.array(self.class_counts, dtype=float)
        feature_counts = np.array(self.feature_counts, dtype=float)
        if class_counts.shape != (2,) or feature_counts.shape != (4, 3, 2):
            raise DomainError("classifier count tables have the wrong shape")
        class_counts.flags.writeable = False
        feature_counts.flags.writeable = False
        object.__setattr__(self, "class_counts", class_counts)
        object.__setattr__(self, "feature_counts", feature_counts)

    @property
    def total(self) -> float:
        return float(self.class_counts.sum())

    def prior(self, c: int) -> float:
        """P(C = c); additive smoothing only when one class never occurs"""
        counts = self.class_counts
        if np.all(counts > 0) or self.smoothing == 0:
            return float(counts[c] / counts.sum())
        return float((counts[c] + self.smoothing) / (counts.sum() + 2 * self.smoothing))

    def conditional(self, feature: int, level: int, c: int) -> float:
        """P(F_i = f_i | C = c) with additive smoothing"""
        domain_size = self.feature_counts.shape[1]
        numerator = self.feature_counts[feature, level, c] + self.smoothing
        denominator = self.class_counts[c] + self.smoothing * domain_size
        if denominator == 0:
            return 0.0
        return float(numerator / denominator)

    def joint(self, state: CurrentState, c: int) -> float:
        """Unnormalized score u(c) = P(C=c) * prod_i P(F_i=f_i | C=c)"""
        score = self.prior(c)
        for feature, level in enumerate(state.level_indices()):
            score *= self.conditional(feature, level, c)
        return score


@dataclass(frozen=True)
class StrokeLikelihood:
    delta: float

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise DomainError(f"stroke likelihood must be in [0, 1], got {self.delta}")


@dataclass(frozen=True)
class PriorityWeight:
    """UP_k = 1 for normal users, 1 + alpha * delta for outpatients"""
    up: float
    alpha: float
    is_outpatient: bool


@dataclass(frozen=True)
class ClassifierMetrics:
    tp: int
    fp: int
    tn: int
    fn: int
    tpr: Optional[float]
    fpr: Optional[float]
    accuracy: float

    def to_dict(self) -> dict:
        """Confusion counts and rates; undefined rates are None"""
        return {
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "tpr": self.tpr, "fpr": self.fpr, "accuracy": self.accuracy,
        }


# Lower band edges (inclusive) for each feature's 2nd and 3rd level.
_BAND_EDGES = (
    (200.0, 240.0),
    (120.0, 140.0),
    (80.0, 90.0),
    (11.0, 20.0),
)

# Built-in current states, numbered 1..7 in this order.
_BUILTIN_STATES = (
    ("Normal", "Pre-hypertension", "Normal", "Heavy"),
    ("High", "High Hypertension", "Normal", "Light"),
    ("Normal", "High Hypertension", "High Hypertension", "Moderate"),
    ("High", "High Hypertension", "High Hypertension", "Heavy"),
    ("Normal", "High Hypertension", "Pre-hypertension", "Light"),
    ("Normal", "High Hypertension", "High Hypertension", "Light"),
    ("High", "High Hypertension", "High Hypertension", "Light"),
)


def discretize(cholesterol: float, systolic: float, diastolic: float,
               cigarettes: float) -> CurrentState:
    """Map raw readings to levels; 0 cigarettes/day falls in the Light band"""
    readings = (cholesterol, systolic, diastolic, cigarettes)
    levels = []
    for name, domain, value, (low, high) in zip(FEATURE_NAMES, FEATURE_DOMAINS, readings, _BAND_EDGES):
        if not (isinstance(value, (int, float, np.integer, np.floating)) and math.isfinite(value)):
            raise DomainError(f"{name} reading must be a finite number, got {value!r}")
        if value < 0:
            raise DomainError(f"{name} reading must be >= 0, got {value}")
        members = list(domain)
        if value >= high:
            levels.append(members[2])
        elif value >= low:
            levels.append(members[1])
        else:
            levels.append(members[0])
    return CurrentState(*levels)


def train(record: MedicalRecord, smoothing: float = 1.0) -> TrainedClassifier:
    """Tally class and (feature level, class) frequencies"""
    if len(record) == 0:
        raise DomainError("cannot train on an empty medical record")
    if not smoothing >= 0:
        raise DomainError(f"smoothing must be >= 0, got {smoothing}")

    class_counts = np.zeros(2)
    feature_counts = np.zeros((4, 3, 2))
    for row in record.rows:
        c = CLASSES.index(row.label)
        class_counts[c] += 1
        for feature, level in enumerate(row.state.level_indices()):
            feature_counts[feature, level, c] += 1

    if np.any(class_counts == 0):
        if smoothing == 0:
            raise DegenerateTrainingDataError(
                "record contains a single class; a smoothing > 0 is required")
        missing = CLASSES[int(np.argmin(class_counts))]
        logger.warning(f"Medical record has no '{missing}' rows; priors are smoothed")

    clf = TrainedClassifier(class_counts, feature_counts, float(smoothing))
    logger.debug(f"Trained classifier on {len(record)} rows, class counts {class_counts.tolist()}")
    return clf


def posterior(clf: TrainedClassifier, state: CurrentState) -> StrokeLikelihood:
    """Normalized two-class posterior of 'yes'"""
    u_yes = clf.joint(state, YES)
    u_no = clf.joint(state, NO)
    if u_yes + u_no == 0:
        raise DegenerateTrainingDataError(
            f"both class scores are zero for state {state.to_names()}; "
            f"train with smoothing > 0")
    return StrokeLikelihood(u_yes / (u_yes + u_no))


def classify(clf: TrainedClassifier, state: CurrentState) -> str:
    """'yes' iff delta >= 0.5"""
    return "yes" if posterior(clf, state).delta >= 0.5 else "no"


def evaluate(clf: TrainedClassifier, labeled: MedicalRecord) -> ClassifierMetrics:
    """Confusion counts and rates of clf on a labeled record"""
    if len(labeled) == 0:
        raise DomainError("cannot evaluate on an empty record")
    tp = fp = tn = fn = 0
    for row in labeled.rows:
        predicted = classify(clf, row.state)
        if row.label == "yes":
            if predicted == "yes":
                tp += 1
            else:
                fn += 1
        elif predicted == "yes":
            fp += 1
        else:
            tn += 1

    fpr = fp / (fp + tn) if fp + tn > 0 else None
    tpr = tp / (tp + fn) if tp + fn > 0 else None
    if fpr is None:
        logger.warning("No negative-class rows; false positive rate is undefined")
    if tpr is None:
        logger.warning("No positive-class rows; true positive rate is undefined")
    return ClassifierMetrics(tp, fp, tn, fn, tpr, fpr, (tp + tn) / len(labeled))


def priority(delta: StrokeLikelihood, alpha: float, is_outpatient: bool) -> PriorityWeight:
    """UP = 1 + alpha * delta for outpatients, 1 for everyone else"""
    if not alpha >= 0:
        raise DomainError(f"alpha must be >= 0, got {alpha}")
    if not is_outpatient:
        return PriorityWeight(1.0, alpha, False)
    return PriorityWeight(1.0 + alpha * delta.delta, alpha, True)


def builtin_current_states() -> List[CurrentState]:
    """The seven evaluation states, in table order"""
    return [CurrentState.from_names(*names) for names in _BUILTIN_STATES]


def state_from_index(index: int) -> CurrentState:
    """Built-in state lookup, 1-based"""
    if not 1 <= index <= len(_BUILTIN_STATES):
        raise DomainError(f"state index must be in 1..{len(_BUILTIN_STATES)}, got {index}")
    return CurrentState.from_names(*_BUILTIN_STATES[index - 1])


def priorities_for(deltas: Sequence[StrokeLikelihood], alpha: float,
                   num_users: int, num_normal: int) -> List[PriorityWeight]:
    """Priority vector for all users; deltas are for users num_normal..num_users-1"""
    if len(deltas) != num_users - num_normal:
        raise DomainError(
            f"expected {num_users - num_normal} outpatient likelihoods, got {len(deltas)}")
    weights = [priority(StrokeLikelihood(0.0), alpha, False) for _ in range(num_normal)]
    weights.extend(priority(delta, alpha, True) for delta in deltas)
    return weights
