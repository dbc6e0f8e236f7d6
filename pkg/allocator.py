"""
Uplink RB allocation for the Pico tier
SINR evaluation, feasibility, the three objectives and two exact solvers:
an exhaustive oracle and a branch-and-bound search over RB columns
"""

import itertools
import json
import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from bayes import PriorityWeight
from errors import (
    ContractViolationError, DomainError, InfeasibleProblemError, SearchSpaceTooLargeError, SolverError,
)
from scenario import Scenario, max_rbs_per_user

logger = logging.getLogger(__name__)

EMPTY = -1
BRUTE_FORCE_LIMIT = 10 ** 7
COLUMN_TUPLE_LIMIT = 2_000_000

Triple = Tuple[int, int, int]


class Objective(Enum):
    """Allocation objectives"""
    WSRMAX = "wsrmax"        # sum of UP_k * SINR
    PF_BEFORE = "pf-before"  # sum of ln SINR
    PF_AFTER = "pf-after"    # ln SINR for normal users, UP_k * SINR for outpatients


@dataclass(frozen=True)
class Assignment:
    """Slot occupancy; slot index is b * rbs_per_pbs + n, EMPTY when unused

    A slot holds a single user index, so the one-user-per-RB constraint holds
    by construction.
    """
    num_pbs: int
    rbs_per_pbs: int
    slots: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(int(s) for s in self.slots))
        if len(self.slots) != self.num_pbs * self.rbs_per_pbs:
            raise ContractViolationError(
                f"assignment has {len(self.slots)} slots, expected {self.num_pbs * self.rbs_per_pbs}")

    @classmethod
    def empty(cls, num_pbs: int, rbs_per_pbs: int) -> "Assignment":
        """All slots unassigned"""
        return cls(num_pbs, rbs_per_pbs, (EMPTY,) * (num_pbs * rbs_per_pbs))

    @classmethod
    def from_pairs(cls, num_pbs: int, rbs_per_pbs: int,
                   pairs: Dict[Tuple[int, int], int]) -> "Assignment":
        """Build from {(b, n): k}"""
        slots = [EMPTY] * (num_pbs * rbs_per_pbs)
        for (b, n), k in pairs.items():
            slots[b * rbs_per_pbs + n] = k
        return cls(num_pbs, rbs_per_pbs, tuple(slots))

    @classmethod
    def from_matrix(cls, x: np.ndarray) -> "Assignment":
        """Build from a binary X[k, n, b]; more than one user per slot is rejected"""
        x = np.asarray(x)
        K, N, B = x.shape
        slots = [EMPTY] * (B * N)
        for k, n, b in zip(*np.nonzero(x)):
            s = b * N + n
            if slots[s] != EMPTY:
                raise ContractViolationError(f"slot (b={b}, n={n}) holds more than one user")
            slots[s] = int(k)
        return cls(B, N, tuple(slots))

    def to_matrix(self, num_users: int) -> np.ndarray:
        """Binary X[k, n, b]"""
        x = np.zeros((num_users, self.rbs_per_pbs, self.num_pbs), dtype=int)
        for k, n, b in self.triples():
            x[k, n, b] = 1
        return x

    def occupant(self, b: int, n: int) -> int:
        """User on RB n of PBS b, or EMPTY"""
        return self.slots[b * self.rbs_per_pbs + n]

    def triples(self) -> List[Triple]:
        """(k, n, b) for every occupied slot, in slot order"""
        out = []
        for s, k in enumerate(self.slots):
            if k != EMPTY:
                b, n = divmod(s, self.rbs_per_pbs)
                out.append((k, n, b))
        return out

    def user_slots(self, k: int) -> List[Tuple[int, int]]:
        """(b, n) pairs held by user k"""
        return [(b, n) for kk, n, b in self.triples() if kk == k]


@dataclass(frozen=True, eq=False)
class AllocationProblem:
    scenario: Scenario
    priorities: Tuple[float, ...]
    objective: Objective
    max_rbs: int

    def __post_init__(self):
        ups = tuple(p.up if isinstance(p, PriorityWeight) else float(p) for p in self.priorities)
        object.__setattr__(self, "priorities", ups)
        config = self.scenario.config
        if len(ups) != config.num_users:
            raise DomainError(f"expected {config.num_users} priorities, got {len(ups)}")
        if any(not (math.isfinite(up) and up > 0) for up in ups):
            raise DomainError("priorities must be finite and > 0")
        if any(up != 1.0 for up in ups[:config.num_normal]):
            raise DomainError("normal users must have priority 1")
        if self.max_rbs < 1:
            raise DomainError(f"max_rbs must be >= 1, got {self.max_rbs}")

    @property
    def num_users(self) -> int:
        return self.scenario.config.num_users

    @property
    def num_pbs(self) -> int:
        return self.scenario.config.num_pbs

    @property
    def rbs_per_pbs(self) -> int:
        return self.scenario.config.rbs_per_pbs

    @property
    def num_normal(self) -> int:
        return self.scenario.config.num_normal

    @property
    def sigma(self) -> float:
        return self.scenario.sigma

    @cached_property
    def _omega(self) -> List[List[List[float]]]:
        return self.scenario.omega.tolist()

    def term(self, k: int, psi: float) -> float:
        """Contribution of one assigned (k, n, b) with SINR psi"""
        if self.objective is Objective.WSRMAX or (
                self.objective is Objective.PF_AFTER and k >= self.num_normal):
            return self.priorities[k] * psi
        return math.log(psi) if psi > 0 else -math.inf


def build_problem(scenario: Scenario, weights: Sequence[Union[PriorityWeight, float]],
                  objective: Objective, max_rbs: Optional[int] = None) -> AllocationProblem:
    """Bundle a scenario with weights and an objective; max_rbs defaults to the power cap in RBs"""
    if max_rbs is None:
        max_rbs = max_rbs_per_user(scenario.config)
    return AllocationProblem(scenario, tuple(weights), objective, max_rbs)


@dataclass(frozen=True)
class Violation:
    constraint: str  # shape | min_rbs | max_rbs | association
    user: Optional[int]
    detail: str


@dataclass(frozen=True)
class FeasibilityReport:
    violations: Tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations


@dataclass(frozen=True)
class AllocationResult:
    assignment: Assignment
    sinr: Dict[Triple, float]
    objective_value: float
    nodes_explored: int
    proven_optimal: bool
    solver: str
    elapsed_s: float = field(default=0.0, compare=False)

    def user_sinr(self, k: int) -> Optional[float]:
        """Mean SINR over user k's RBs"""
        values = [psi for (kk, _, _), psi in self.sinr.items() if kk == k]
        return sum(values) / len(values) if values else None

    def to_dict(self, problem: AllocationProblem) -> dict:
        """JSON-ready result with per-user SINR in linear and dB form"""
        users = []
        for k in range(problem.num_users):
            triples = [(kk, n, b) for kk, n, b in self.assignment.triples() if kk == k]
            linear = [self.sinr[t] for t in triples]
            mean = self.user_sinr(k)
            users.append({
                "user": k,
                "outpatient": problem.scenario.op_flags[k],
                "priority": problem.priorities[k],
                "pbs": triples[0][2] if triples else None,
                "rbs": [n for _, n, _ in triples],
                "sinr_linear": linear,
                "sinr_db": [_to_db(v) for v in linear],
                "mean_sinr_linear": mean,
                "mean_sinr_db": _to_db(mean) if mean is not None else None,
            })
        return {
            "objective": problem.objective.value,
            "objective_value": self.objective_value,
            "nodes_explored": self.nodes_explored,
            "proven_optimal": self.proven_optimal,
            "solver": self.solver,
            "elapsed_s": self.elapsed_s,
            "assignment": {
                "num_pbs": self.assignment.num_pbs,
                "rbs_per_pbs": self.assignment.rbs_per_pbs,
                "slots": list(self.assignment.slots),
            },
            "users": users,
        }


def _to_db(value: float) -> Optional[float]:
    return 10.0 * math.log10(value) if value > 0 else None


def _slot_sinr(problem: AllocationProblem, slots: Sequence[int], k: int, n: int, b: int) -> float:
    omega = problem._omega
    N = problem.rbs_per_pbs
    interference = 0.0
    for w in range(problem.num_pbs):
        if w == b:
            continue
        m = slots[w * N + n]
        if m != EMPTY:
            interference += omega[m][n][b]
    return omega[k][n][b] / (interference + problem.sigma)


def _objective_value(problem: AllocationProblem, slots: Sequence[int]) -> float:
    N = problem.rbs_per_pbs
    total = 0.0
    for s, k in enumerate(slots):
        if k == EMPTY:
            continue
        b, n = divmod(s, N)
        total += problem.term(k, _slot_sinr(problem, slots, k, n, b))
    return total


def _slots_feasible(slots: Sequence[int], num_users: int, rbs_per_pbs: int, max_rbs: int) -> bool:
    counts = [0] * num_users
    assoc = [EMPTY] * num_users
    for s, k in enumerate(slots):
        if k == EMPTY:
            continue
        b = s // rbs_per_pbs
        if assoc[k] == EMPTY:
            assoc[k] = b
        elif assoc[k] != b:
            return False
        counts[k] += 1
        if counts[k] > max_rbs:
            return False
    return all(counts)


def _check_shape(problem: AllocationProblem, assignment: Assignment):
    if (assignment.num_pbs, assignment.rbs_per_pbs) != (problem.num_pbs, problem.rbs_per_pbs):
        raise ContractViolationError(
            f"assignment is {assignment.num_pbs}x{assignment.rbs_per_pbs}, "
            f"problem is {problem.num_pbs}x{problem.rbs_per_pbs}")


def sinr(problem: AllocationProblem, assignment: Assignment, k: int, n: int, b: int) -> float:
    """SINR of user k on RB n at PBS b, interfered by RB n on every other PBS"""
    _check_shape(problem, assignment)
    if assignment.occupant(b, n) != k:
        raise ContractViolationError(f"user {k} is not assigned to (b={b}, n={n})")
    return _slot_sinr(problem, assignment.slots, k, n, b)


def check_feasible(problem: AllocationProblem, assignment: Assignment) -> FeasibilityReport:
    """Min/max RB counts and single-PBS association; violations are returned, not raised"""
    violations = []
    if (assignment.num_pbs, assignment.rbs_per_pbs) != (problem.num_pbs, problem.rbs_per_pbs):
        violations.append(Violation("shape", None, "assignment shape does not match the scenario"))
        return FeasibilityReport(tuple(violations))
    bad = [k for k in assignment.slots if k != EMPTY and not 0 <= k < problem.num_users]
    if bad:
        violations.append(Violation("shape", None, f"unknown user indices {sorted(set(bad))}"))
        return FeasibilityReport(tuple(violations))

    for k in range(problem.num_users):
        held = assignment.user_slots(k)
        if not held:
            violations.append(Violation("min_rbs", k, "user holds no RB"))
            continue
        if len(held) > problem.max_rbs:
            violations.append(Violation(
                "max_rbs", k, f"user holds {len(held)} RBs, power cap allows {problem.max_rbs}"))
        pbs = sorted({b for b, _ in held})
        if len(pbs) > 1:
            violations.append(Violation("association", k, f"user spans PBSs {pbs}"))
    return FeasibilityReport(tuple(violations))


def evaluate_objective(problem: AllocationProblem, assignment: Assignment) -> float:
    """Objective of a feasible assignment; infeasible input raises ContractViolationError"""
    report = check_feasible(problem, assignment)
    if not report.ok:
        raise ContractViolationError(f"assignment is infeasible: {list(report.violations)}")
    value = _objective_value(problem, assignment.slots)
    if not math.isfinite(value):
        raise SolverError(f"objective {problem.objective.value} is not finite ({value})")
    return value


def _build_result(problem: AllocationProblem, slots: Sequence[int], nodes: int,
                  solver: str, started: float) -> AllocationResult:
    assignment = Assignment(problem.num_pbs, problem.rbs_per_pbs, tuple(slots))
    values = {(k, n, b): sinr(problem, assignment, k, n, b) for k, n, b in assignment.triples()}
    result = AllocationResult(
        assignment=assignment,
        sinr=values,
        objective_value=evaluate_objective(problem, assignment),
        nodes_explored=nodes,
        proven_optimal=True,
        solver=solver,
        elapsed_s=time.perf_counter() - started,
    )
    logger.debug(f"{solver}: objective {result.objective_value:.6g}, "
                 f"{nodes} nodes, {result.elapsed_s * 1000:.1f} ms")
    return result


def solve_bruteforce(problem: AllocationProblem) -> AllocationResult:
    """Enumerate every slot vector; ties go to the lexicographically smallest"""
    started = time.perf_counter()
    K, N, S = problem.num_users, problem.rbs_per_pbs, problem.num_pbs * problem.rbs_per_pbs
    space = (K + 1) ** S
    if space > BRUTE_FORCE_LIMIT:
        raise SearchSpaceTooLargeError(
            f"{space} assignments exceed the brute-force limit of {BRUTE_FORCE_LIMIT}; use solve()")

    best_value = -math.inf
    best_slots = None
    explored = 0
    # product() yields slot vectors in lexicographic order, so strict '>' keeps the smallest tie.
    for slots in itertools.product(range(EMPTY, K), repeat=S):
        explored += 1
        if not _slots_feasible(slots, K, N, problem.max_rbs):
            continue
        value = _objective_value(problem, slots)
        if value > best_value:
            best_value, best_slots = value, slots

    if best_slots is None:
        raise InfeasibleProblemError("no feasible assignment with a finite objective")
    return _build_result(problem, best_slots, explored, "bruteforce", started)


class _ColumnSearch:
    """Depth-first branch-and-bound over RB columns

    Interference only couples slots that share an RB index, so the objective
    is a sum of per-column values. Each tree level fixes the occupants of one
    RB across all PBSs. A node is pruned by the smaller of two bounds on the
    open columns: the best column value still reachable under the current RB
    counts and PBS associations, and an assignment relaxation that gives
    every user still without an RB its own free slot.
    """

    def __init__(self, problem: AllocationProblem):
        self.problem = problem
        K, N, B = problem.num_users, problem.rbs_per_pbs, problem.num_pbs
        if (K + 1) ** B > COLUMN_TUPLE_LIMIT:
            raise SearchSpaceTooLargeError(
                f"{(K + 1) ** B} column patterns exceed the limit of {COLUMN_TUPLE_LIMIT}")
        self.K, self.N, self.B = K, N, B
        self.sigma = problem.sigma
        self.omega = problem.scenario.omega
        self.ups = np.array(problem.priorities)
        self.linear_terms = np.array([
            problem.objective is Objective.WSRMAX
            or (problem.objective is Objective.PF_AFTER and k >= problem.num_normal)
            for k in range(K)])
        self.free_values = self._term_values(np.arange(K), self.omega / self.sigma)

        tuples = [t for t in itertools.product(range(EMPTY, K), repeat=B)
                  if len({k for k in t if k != EMPTY}) == sum(1 for k in t if k != EMPTY)]
        self.tuples = tuples
        occ = np.array(tuples, dtype=int).reshape(len(tuples), B)
        self.mask_index = np.where(occ == EMPTY, K, occ)
        self.empties = (occ == EMPTY).sum(axis=1)
        self.positions = np.arange(B)[np.newaxis, :]

        self.values = np.empty((N, len(tuples)))
        column = [EMPTY] * (B * N)
        for n in range(N):
            for t, occupants in enumerate(tuples):
                for b, k in enumerate(occupants):
                    column[b * N + n] = k
                self.values[n, t] = sum(
                    problem.term(k, _slot_sinr(problem, column, k, n, b))
                    for b, k in enumerate(occupants) if k != EMPTY)
            for b in range(B):
                column[b * N + n] = EMPTY

        self.slots = [EMPTY] * (B * N)
        self.counts = [0] * K
        self.assoc = [EMPTY] * K
        self.zero_users = K
        self.nodes = 0
        self.best_value = -math.inf
        self.best_slots: Optional[Tuple[int, ...]] = None

    def _threshold(self) -> float:
        if self.best_slots is None:
            return -math.inf
        return self.best_value - 1e-9 * max(1.0, abs(self.best_value))

    def _term_values(self, users: np.ndarray, psi: np.ndarray) -> np.ndarray:
        """Vectorized AllocationProblem.term for psi[i, ...] of users[i]"""
        shape = (-1,) + (1,) * (psi.ndim - 1)
        linear = self.linear_terms[users].reshape(shape)
        ups = self.ups[users].reshape(shape)
        with np.errstate(divide="ignore"):
            logs = np.log(psi)
        return np.where(linear, ups * psi, logs)

    def _matching_bound(self, j: int, slack: int) -> float:
        """Assignment relaxation of columns j.. with interference-free SINR

        Rows are the users still without an RB plus one row per spare slot;
        a spare row scores the best term any user with capacity left could
        reach in that slot, or 0 for leaving it empty. With no spare slots
        every open slot is filled, so each one is interfered by at least the
        weakest other uncovered user on every other PBS.
        """
        K, B = self.K, self.B
        zero = np.array([k for k in range(K) if self.counts[k] == 0], dtype=int)
        if slack == 0 and B > 1:
            received = self.omega[zero, j:, :]
            lowest = received.min(axis=0)
            second = np.partition(received, 1, axis=0)[1]
            is_lowest = np.arange(len(zero))[:, np.newaxis, np.newaxis] == received.argmin(axis=0)
            weakest_other = np.where(is_lowest, second, lowest)
            rows = self._term_values(zero, received / (self.sigma + (B - 1) * weakest_other))
        else:
            rows = self.free_values[zero, j:, :]
        rows = rows.reshape(len(zero), (self.N - j) * B)

        if slack > 0:
            spare = np.zeros(rows.shape[1])
            for k in range(K):
                # a user without an RB spends one on its own row
                capacity = self.problem.max_rbs - max(self.counts[k], 1)
                if capacity <= 0:
                    continue
                values = self.free_values[k, j:, :]
                if self.assoc[k] != EMPTY:
                    values = np.where(np.arange(B) == self.assoc[k], values, -np.inf)
                spare = np.maximum(spare, values.reshape(-1))
            rows = np.vstack([rows, np.tile(spare, (slack, 1))])
        return _best_matching(rows)

    def _allowed_tuples(self, slack: int) -> np.ndarray:
        allowed = np.ones((self.B, self.K + 1), dtype=bool)
        for k in range(self.K):
            if self.counts[k] >= self.problem.max_rbs:
                allowed[:, k] = False
            elif self.assoc[k] != EMPTY:
                allowed[:, k] = False
                allowed[self.assoc[k], k] = True
        ok = allowed[self.positions, self.mask_index].all(axis=1)
        return ok & (self.empties <= slack)

    def run(self) -> Tuple[Optional[Tuple[int, ...]], int]:
        """Best slot vector (None if infeasible) and the node count"""
        self._search(0, 0.0)
        return self.best_slots, self.nodes

    def _search(self, j: int, base: float):
        self.nodes += 1
        N, B = self.N, self.B
        remaining = (N - j) * B
        slack = remaining - self.zero_users
        if slack < 0:
            return

        ok = self._allowed_tuples(slack)
        column_best = np.where(ok, self.values[j:], -np.inf).max(axis=1)
        if not np.all(np.isfinite(column_best)):
            return
        if base + column_best.sum() < self._threshold():
            return
        if self.best_slots is not None and base + self._matching_bound(j, slack) < self._threshold():
            return
        future = float(column_best[1:].sum())

        row = self.values[j]
        candidates = np.flatnonzero(ok & np.isfinite(row))
        order = candidates[np.argsort(-row[candidates], kind="stable")]
        for t in order:
            h = float(row[t])
            if base + h + future < self._threshold():
                break
            occupants = self.tuples[t]
            covered = sum(1 for k in occupants if k != EMPTY and self.counts[k] == 0)
            if self.zero_users - covered > remaining - B:
                continue

            saved_assoc = [self.assoc[k] for k in occupants if k != EMPTY]
            for b, k in enumerate(occupants):
                self.slots[b * N + j] = k
                if k != EMPTY:
                    if self.counts[k] == 0:
                        self.zero_users -= 1
                    self.counts[k] += 1
                    self.assoc[k] = b

            if j + 1 == N:
                self._leaf()
            else:
                self._search(j + 1, base + h)

            restore = iter(saved_assoc)
            for b, k in enumerate(occupants):
                self.slots[b * N + j] = EMPTY
                if k != EMPTY:
                    self.counts[k] -= 1
                    if self.counts[k] == 0:
                        self.zero_users += 1
                    self.assoc[k] = next(restore)

    def _leaf(self):
        self.nodes += 1
        slots = tuple(self.slots)
        value = _objective_value(self.problem, slots)
        if not math.isfinite(value):
            return
        if (self.best_slots is None or value > self.best_value
                or (value == self.best_value and slots < self.best_slots)):
            self.best_value, self.best_slots = value, slots


def _best_matching(values: np.ndarray) -> float:
    """Maximum-weight perfect matching of a square matrix; -inf entries are forbidden"""
    finite = np.isfinite(values)
    if not finite.any():
        return -math.inf
    # outweighs any mix of finite entries, so it is only chosen when nothing else fits
    penalty = -(2.0 * values.shape[0] * float(np.abs(values[finite]).max()) + 1.0)
    rows, cols = linear_sum_assignment(np.where(finite, values, penalty), maximize=True)
    if not finite[rows, cols].all():
        return -math.inf
    return float(values[rows, cols].sum())


def solve(problem: AllocationProblem) -> AllocationResult:
    """Certified optimum by branch-and-bound; same tie-break as solve_bruteforce"""
    started = time.perf_counter()
    search = _ColumnSearch(problem)
    best_slots, nodes = search.run()
    if best_slots is None:
        raise InfeasibleProblemError(
            f"no feasible assignment for {problem.num_users} users on "
            f"{problem.num_pbs}x{problem.rbs_per_pbs} slots with max_rbs={problem.max_rbs}")
    return _build_result(problem, best_slots, nodes, "branch-and-bound", started)


def write_result_json(problem: AllocationProblem, result: AllocationResult,
                      path: Union[str, Path]):
    """Write result.to_dict as indented JSON"""
    try:
        with open(path, "w") as f:
            json.dump(result.to_dict(problem), f, indent=2)
        logger.info(f"Wrote allocation result to {path}")
    except OSError as e:
        logger.error(f"Error writing allocation result: {e}")
        raise
