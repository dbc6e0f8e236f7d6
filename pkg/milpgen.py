"""
MILP export of the RB allocation problem
Big-M linearized SINR model with tangent-cut ln, written in LP file format
for external solvers, plus a reader and two small cross-check solvers
"""

import itertools
import logging
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np
import pulp

from allocator import AllocationProblem, Assignment, Objective
from errors import DomainError, InfeasibleProblemError, SearchSpaceTooLargeError, SolverError

logger = logging.getLogger(__name__)

DEFAULT_BREAKPOINTS = 33
LOWEST_BREAKPOINT = 1e-3
ENUMERATION_LIMIT = 2 ** 20
TERMS_PER_LINE = 8
SENSES = ("<=", ">=", "=")

Terms = List[Tuple[str, float]]


class VarKind(Enum):
    BINARY = "binary"
    CONTINUOUS = "continuous"


@dataclass
class Variable:
    name: str
    kind: VarKind
    lower: Optional[float] = 0.0   # None = -inf
    upper: Optional[float] = None  # None = +inf


@dataclass
class Constraint:
    name: str
    terms: Terms
    sense: str
    rhs: float

    def __post_init__(self):
        if self.sense not in SENSES:
            raise DomainError(f"constraint {self.name}: unknown sense {self.sense!r}")

    def lhs(self, values: Dict[str, float]) -> float:
        """Left-hand side at the given variable values"""
        return sum(c * values[name] for name, c in self.terms)

    def satisfied(self, values: Dict[str, float], tol: float = 1e-7) -> bool:
        """Whether the row holds for the given variable values"""
        lhs = self.lhs(values)
        scale = 1.0 + abs(self.rhs) + sum(abs(c * values[name]) for name, c in self.terms)
        slack = tol * scale
        if self.sense == "<=":
            return lhs <= self.rhs + slack
        if self.sense == ">=":
            return lhs >= self.rhs - slack
        return abs(lhs - self.rhs) <= slack


@dataclass
class MilpModel:
    """Maximization model; variables keep insertion order"""
    name: str
    objective: Terms = field(default_factory=list)
    constraints: List[Constraint] = field(default_factory=list)
    variables: Dict[str, Variable] = field(default_factory=dict)

    def add_variable(self, name: str, kind: VarKind, lower: Optional[float] = 0.0,
                     upper: Optional[float] = None) -> str:
        """Declare a variable and return its name"""
        if name in self.variables:
            raise DomainError(f"variable {name} declared twice")
        self.variables[name] = Variable(name, kind, lower, upper)
        return name

    def add_constraint(self, name: str, terms: Iterable[Tuple[str, float]], sense: str, rhs: float):
        """Append a row; zero coefficients are dropped"""
        kept = [(v, float(c)) for v, c in terms if c != 0]
        if kept:
            self.constraints.append(Constraint(name, kept, sense, float(rhs) + 0.0))

    @property
    def binaries(self) -> List[str]:
        return [v.name for v in self.variables.values() if v.kind is VarKind.BINARY]

    @property
    def continuous(self) -> List[str]:
        return [v.name for v in self.variables.values() if v.kind is VarKind.CONTINUOUS]

    @property
    def products(self) -> List[str]:
        return [name for name in self.variables if name.startswith("V_")]

    def validate(self):
        """Every referenced name is declared"""
        for name, _ in self.objective:
            if name not in self.variables:
                raise DomainError(f"objective references undeclared variable {name}")
        for con in self.constraints:
            for name, _ in con.terms:
                if name not in self.variables:
                    raise DomainError(f"constraint {con.name} references undeclared variable {name}")


@dataclass(frozen=True)
class PiecewiseLnSpec:
    """Tangent points of the ln outer approximation"""
    breakpoints: Tuple[float, ...]
    m_max: float

    def __post_init__(self):
        points = tuple(float(p) for p in self.breakpoints)
        object.__setattr__(self, "breakpoints", points)
        if len(points) < 2:
            raise DomainError("at least 2 breakpoints are required")
        if any(p <= 0 or not math.isfinite(p) for p in points):
            raise DomainError("breakpoints must be finite and > 0")
        if any(b <= a for a, b in zip(points, points[1:])):
            raise DomainError("breakpoints must be strictly ascending")

    @classmethod
    def for_problem(cls, problem: AllocationProblem, count: int = DEFAULT_BREAKPOINTS) -> "PiecewiseLnSpec":
        """count points, log-spaced from 1e-3 up to the largest Omega/sigma"""
        if count < 2:
            raise DomainError(f"at least 2 breakpoints are required, got {count}")
        m_max = float(np.max(problem.scenario.omega)) / problem.sigma
        low = min(LOWEST_BREAKPOINT, m_max / 1e3) if m_max > 0 else LOWEST_BREAKPOINT
        high = max(m_max, low * 10.0)
        return cls(tuple(np.logspace(math.log10(low), math.log10(high), count).tolist()), m_max)


@dataclass
class MilpSolution:
    objective_value: float
    values: Dict[str, float]
    solver: str


def _x(k, n, b) -> str:
    return f"X_{k}_{n}_{b}"


def _psi(k, n, b) -> str:
    return f"PSI_{k}_{n}_{b}"


def _v(k, n, m, b, w) -> str:
    return f"V_{k}_{n}_{m}_{b}_{w}"


def _l(k, n, b) -> str:
    return f"L_{k}_{n}_{b}"


def _uses_ln(problem: AllocationProblem, k: int) -> bool:
    if problem.objective is Objective.PF_BEFORE:
        return True
    return problem.objective is Objective.PF_AFTER and k < problem.num_normal


def build_milp(problem: AllocationProblem, pw: Optional[PiecewiseLnSpec] = None,
               name: str = "rb_allocation") -> MilpModel:
    """Linearized model of the allocation problem

    SINR rows are divided by sigma, so PSI has coefficient 1 and every big-M
    is Omega[k, n, b] / sigma.
    """
    K, N, B = problem.num_users, problem.rbs_per_pbs, problem.num_pbs
    gain = problem.scenario.omega / problem.sigma
    if pw is None and problem.objective is not Objective.WSRMAX:
        pw = PiecewiseLnSpec.for_problem(problem)

    model = MilpModel(name)
    cells = [(k, n, b) for k in range(K) for n in range(N) for b in range(B)]
    for k, n, b in cells:
        model.add_variable(_x(k, n, b), VarKind.BINARY, 0.0, 1.0)
    for k, n, b in cells:
        model.add_variable(_psi(k, n, b), VarKind.CONTINUOUS, 0.0, None)
    for k, n, b in cells:
        for m in range(K):
            for w in range(B):
                if m != k and w != b:
                    model.add_variable(_v(k, n, m, b, w), VarKind.CONTINUOUS, 0.0, None)
    ln_cells = [(k, n, b) for k, n, b in cells if _uses_ln(problem, k)]
    for k, n, b in ln_cells:
        model.add_variable(_l(k, n, b), VarKind.CONTINUOUS, None, None)

    for b in range(B):
        for n in range(N):
            model.add_constraint(f"slot_{b}_{n}", [(_x(k, n, b), 1.0) for k in range(K)], "<=", 1.0)
    for k in range(K):
        held = [(_x(k, n, b), 1.0) for n in range(N) for b in range(B)]
        model.add_constraint(f"maxrb_{k}", held, "<=", float(problem.max_rbs))
        model.add_constraint(f"minrb_{k}", held, ">=", 1.0)
    # Single association: no two RBs of a user on different PBSs.
    for k in range(K):
        for b in range(B):
            for w in range(b + 1, B):
                for n in range(N):
                    for n2 in range(N):
                        model.add_constraint(f"assoc_{k}_{n}_{b}_{n2}_{w}",
                                             [(_x(k, n, b), 1.0), (_x(k, n2, w), 1.0)], "<=", 1.0)

    for k, n, b in cells:
        big_m = float(gain[k, n, b])
        terms = [(_psi(k, n, b), 1.0)]
        terms += [(_v(k, n, m, b, w), float(gain[m, n, b]))
                  for m in range(K) for w in range(B) if m != k and w != b]
        terms.append((_x(k, n, b), -big_m))
        model.add_constraint(f"sinr_{k}_{n}_{b}", terms, "=", 0.0)
        model.add_constraint(f"psiub_{k}_{n}_{b}", [(_psi(k, n, b), 1.0), (_x(k, n, b), -big_m)], "<=", 0.0)
        for m in range(K):
            for w in range(B):
                if m == k or w == b:
                    continue
                v, partner = _v(k, n, m, b, w), _x(m, n, w)
                tag = f"{k}_{n}_{m}_{b}_{w}"
                model.add_constraint(f"vx_{tag}", [(v, 1.0), (partner, -big_m)], "<=", 0.0)
                model.add_constraint(f"vpsi_{tag}", [(v, 1.0), (_psi(k, n, b), -1.0)], "<=", 0.0)
                model.add_constraint(f"vlb_{tag}", [(v, 1.0), (_psi(k, n, b), -1.0), (partner, -big_m)],
                                     ">=", -big_m)

    for k, n, b in ln_cells:
        _add_ln_cuts(model, k, n, b, float(gain[k, n, b]), pw)

    for k, n, b in cells:
        if _uses_ln(problem, k):
            model.objective.append((_l(k, n, b), 1.0))
        else:
            model.objective.append((_psi(k, n, b), problem.priorities[k]))

    model.validate()
    logger.debug(f"Built MILP {name}: {len(model.binaries)} binaries, {len(model.continuous)} continuous, "
                 f"{len(model.constraints)} constraints")
    return model


def _add_ln_cuts(model: MilpModel, k: int, n: int, b: int, big_m: float, pw: PiecewiseLnSpec):
    """L <= ln p + (PSI - p) / p when X = 1, and L <= 0 when X = 0"""
    x, psi, ell = _x(k, n, b), _psi(k, n, b), _l(k, n, b)
    for j, p in enumerate(pw.breakpoints):
        lift = max(0.0, 1.0 - math.log(p))
        model.add_constraint(f"lncut_{k}_{n}_{b}_{j}", [(ell, 1.0), (psi, -1.0 / p), (x, lift)],
                             "<=", math.log(p) - 1.0 + lift)
    if big_m > 0:
        model.add_constraint(f"lncap_{k}_{n}_{b}", [(ell, 1.0), (x, -math.log(big_m))], "<=", 0.0)
    else:
        # ln 0 is unbounded below: the slot is closed for this user.
        model.add_constraint(f"lncap_{k}_{n}_{b}", [(ell, 1.0)], "<=", 0.0)
        model.add_constraint(f"lnzero_{k}_{n}_{b}", [(x, 1.0)], "<=", 0.0)


def _number(value: float) -> str:
    return repr(float(value))


def _format_terms(terms: Terms) -> List[str]:
    """Render terms, TERMS_PER_LINE per output line"""
    rendered = []
    for i, (name, c) in enumerate(terms):
        if i == 0:
            rendered.append(f"{_number(c)} {name}")
        elif c < 0:
            rendered.append(f" - {_number(-c)} {name}")
        else:
            rendered.append(f" + {_number(c)} {name}")
    return ["".join(rendered[i:i + TERMS_PER_LINE]) for i in range(0, len(rendered), TERMS_PER_LINE)]


def _bound_line(var: Variable) -> str:
    if var.lower is None and var.upper is None:
        return f" {var.name} free"
    if var.upper is None:
        return f" {var.name} >= {_number(var.lower)}"
    if var.lower is None:
        return f" -inf <= {var.name} <= {_number(var.upper)}"
    return f" {_number(var.lower)} <= {var.name} <= {_number(var.upper)}"


def lp_text(model: MilpModel) -> str:
    """The model in LP format, as write_lp emits it"""
    lines = [f"\\ Problem name: {model.name}", "Maximize"]
    objective = _format_terms(model.objective) or ["0.0"]
    lines.append(f" obj: {objective[0]}")
    lines.extend(f"   {chunk}" for chunk in objective[1:])

    if model.constraints:
        lines.append("Subject To")
        for con in model.constraints:
            chunks = _format_terms(con.terms)
            chunks[-1] += f" {con.sense} {_number(con.rhs)}"
            lines.append(f" {con.name}: {chunks[0]}")
            lines.extend(f"   {chunk}" for chunk in chunks[1:])

    continuous = [v for v in model.variables.values() if v.kind is VarKind.CONTINUOUS]
    if continuous:
        lines.append("Bounds")
        lines.extend(_bound_line(v) for v in continuous)
    if model.binaries:
        lines.append("Binary")
        lines.extend(f" {name}" for name in model.binaries)
    lines.append("End")
    return "\n".join(lines) + "\n"


def write_lp(model: MilpModel, sink: Union[str, Path, TextIO]):
    """Write LP format to a path or an open text stream"""
    text = lp_text(model)
    if hasattr(sink, "write"):
        sink.write(text)
        return
    try:
        with open(sink, "w", newline="\n") as f:
            f.write(text)
        logger.info(f"Wrote LP model {model.name} to {sink}")
    except OSError as e:
        logger.error(f"Error writing LP file: {e}")
        raise


_SECTIONS = {"maximize": "objective", "subject to": "constraints", "bounds": "bounds",
             "binary": "binary", "end": "end"}


def _parse_terms(tokens: Sequence[str]) -> Terms:
    terms, sign, coef = [], 1.0, None
    for token in tokens:
        if token in ("+", "-"):
            sign = 1.0 if token == "+" else -1.0
            continue
        try:
            coef = float(token)
            continue
        except ValueError:
            pass
        terms.append((token, sign * (1.0 if coef is None else coef)))
        sign, coef = 1.0, None
    return terms


def parse_lp(text: Union[str, TextIO]) -> MilpModel:
    """Read the LP dialect produced by write_lp"""
    if not isinstance(text, str):
        text = text.read()
    name = "model"
    section = None
    statements: Dict[str, List[List[str]]] = {"objective": [], "constraints": [], "bounds": [], "binary": []}

    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("\\"):
            match = re.match(r"\\\s*Problem name:\s*(\S+)", line)
            if match:
                name = match.group(1)
            continue
        if line.lower() in _SECTIONS:
            section = _SECTIONS[line.lower()]
            continue
        if section in (None, "end"):
            raise DomainError(f"LP text outside of a section: {line!r}")
        tokens = line.split()
        starts_new = section in ("bounds", "binary") or tokens[0].endswith(":")
        if starts_new or not statements[section]:
            statements[section].append(tokens)
        else:
            statements[section][-1].extend(tokens)

    model = MilpModel(name)
    for tokens in statements["bounds"]:
        if len(tokens) == 2 and tokens[1] == "free":
            model.add_variable(tokens[0], VarKind.CONTINUOUS, None, None)
        elif len(tokens) == 3 and tokens[1] == ">=":
            model.add_variable(tokens[0], VarKind.CONTINUOUS, float(tokens[2]), None)
        elif len(tokens) == 5 and tokens[1] == tokens[3] == "<=":
            lower = None if tokens[0] == "-inf" else float(tokens[0])
            model.add_variable(tokens[2], VarKind.CONTINUOUS, lower, float(tokens[4]))
        else:
            raise DomainError(f"unsupported bound: {' '.join(tokens)}")
    for tokens in statements["binary"]:
        for token in tokens:
            model.add_variable(token, VarKind.BINARY, 0.0, 1.0)

    for tokens in statements["objective"]:
        model.objective.extend(_parse_terms(tokens[1:] if tokens[0].endswith(":") else tokens))
    for tokens in statements["constraints"]:
        sense_at = next(i for i, t in enumerate(tokens) if t in SENSES)
        model.constraints.append(Constraint(
            tokens[0].rstrip(":"), _parse_terms(tokens[1:sense_at]), tokens[sense_at], float(tokens[sense_at + 1])))

    for con in model.constraints:
        for var, _ in con.terms:
            if var not in model.variables:
                model.add_variable(var, VarKind.CONTINUOUS)
    model.validate()
    return model


def _partner(product: str) -> str:
    _, k, n, m, b, w = product.split("_")
    return f"X_{m}_{n}_{w}"


def evaluate_fixed(model: MilpModel, binaries: Dict[str, int]) -> Optional[MilpSolution]:
    """Complete the continuous part for fixed binaries; None if a row is violated

    PSI comes from its SINR row, V = PSI * partner X, and L sits at the
    tightest of its cuts, which is its optimal value for a maximization.
    """
    values: Dict[str, float] = {name: float(binaries.get(name, 0)) for name in model.binaries}
    rows = {con.name: con for con in model.constraints}

    for name in model.variables:
        if not name.startswith("PSI_"):
            continue
        row = rows.get("sinr_" + name[len("PSI_"):])
        if row is None:
            values[name] = 0.0
            continue
        coef = dict(row.terms)
        gain = sum(-c * values[v] for v, c in row.terms if v.startswith("X_"))
        denominator = coef.get(name, 1.0) + sum(
            c * values[_partner(v)] for v, c in row.terms if v.startswith("V_"))
        values[name] = gain / denominator if gain != 0 else 0.0
    for name in model.variables:
        if name.startswith("V_"):
            values[name] = values["PSI_" + "_".join(name.split("_")[i] for i in (1, 2, 4))] \
                * values[_partner(name)]

    free = [name for name in model.variables if name not in values]
    for name in free:
        caps = []
        for con in model.constraints:
            coef = dict(con.terms).get(name)
            if coef is None:
                continue
            if con.sense != "<=" or coef <= 0:
                raise SolverError(f"cannot fix {name} from constraint {con.name}")
            rest = sum(c * values[v] for v, c in con.terms if v != name)
            caps.append((con.rhs - rest) / coef)
        if not caps:
            raise SolverError(f"{name} is unbounded")
        values[name] = min(caps)

    if not all(con.satisfied(values) for con in model.constraints):
        return None
    return MilpSolution(sum(c * values[name] for name, c in model.objective), values, "enumeration")


def solve_by_enumeration(model: MilpModel, limit: int = ENUMERATION_LIMIT) -> MilpSolution:
    """Exact optimum of a small model by trying every binary pattern"""
    binaries = model.binaries
    if 2 ** len(binaries) > limit:
        raise SearchSpaceTooLargeError(f"{len(binaries)} binaries exceed the enumeration limit of {limit}")
    binary_set = set(binaries)
    binary_rows = [con for con in model.constraints if all(v in binary_set for v, _ in con.terms)]

    best: Optional[MilpSolution] = None
    feasible = 0
    for bits in itertools.product((0, 1), repeat=len(binaries)):
        pattern = dict(zip(binaries, bits))
        if not all(con.satisfied(pattern, tol=1e-9) for con in binary_rows):
            continue
        feasible += 1
        solution = evaluate_fixed(model, pattern)
        if solution is not None and (best is None or solution.objective_value > best.objective_value):
            best = solution
    if best is None:
        raise InfeasibleProblemError(f"model {model.name} has no feasible binary pattern")
    logger.debug(f"Enumerated {model.name}: {feasible} feasible binary patterns")
    return best


def binaries_for(assignment: Assignment, num_users: int) -> Dict[str, int]:
    """X values of an allocator assignment"""
    x = assignment.to_matrix(num_users)
    return {_x(k, n, b): int(x[k, n, b]) for k, n, b in np.ndindex(*x.shape)}


def cbc_available() -> bool:
    """Whether pulp can reach a working CBC binary"""
    try:
        return bool(pulp.PULP_CBC_CMD(msg=False).available())
    except Exception:
        return False


def to_pulp(model: MilpModel) -> Tuple[pulp.LpProblem, Dict[str, pulp.LpVariable]]:
    """Translate the model into a pulp problem"""
    prob = pulp.LpProblem(model.name, pulp.LpMaximize)
    lp_vars = {}
    for var in model.variables.values():
        if var.kind is VarKind.BINARY:
            lp_vars[var.name] = pulp.LpVariable(var.name, cat=pulp.LpBinary)
        else:
            lp_vars[var.name] = pulp.LpVariable(var.name, lowBound=var.lower, upBound=var.upper)

    prob += pulp.lpSum(c * lp_vars[name] for name, c in model.objective)
    for con in model.constraints:
        expr = pulp.lpSum(c * lp_vars[name] for name, c in con.terms)
        if con.sense == "<=":
            prob += expr <= con.rhs, con.name
        elif con.sense == ">=":
            prob += expr >= con.rhs, con.name
        else:
            prob += expr == con.rhs, con.name
    return prob, lp_vars


def solve_with_pulp(model: MilpModel, time_limit: Optional[float] = None) -> MilpSolution:
    """Solve with the CBC binary bundled with pulp"""
    solver = pulp.PULP_CBC_CMD(msg=False, timeLimit=time_limit)
    if not solver.available():
        raise SolverError("CBC solver is not available")
    prob, lp_vars = to_pulp(model)
    try:
        status = prob.solve(solver)
    except pulp.PulpSolverError as e:
        logger.error(f"CBC failed on {model.name}: {e}")
        raise SolverError(str(e)) from e
    if pulp.LpStatus[status] != "Optimal":
        raise SolverError(f"CBC returned status {pulp.LpStatus[status]} for {model.name}")
    values = {name: float(var.value() or 0.0) for name, var in lp_vars.items()}
    return MilpSolution(float(pulp.value(prob.objective)), values, "cbc")
