"""Small dense linear programs over photon-number probabilities.

Problems are minimizations over variables ``p_0 .. p_n`` with finite box
bounds (default [0, 1]) and a mandatory normalization row ``sum p = 1``.
:func:`solve_lp` runs a two-phase revised simplex (Dantzig pricing, falling
back to Bland's rule when pivots stall); every iteration refactors the basis
from the original data, so no tableau error accumulates.  Problem sizes here are ~11 variables and ~20 rows.

Text format (one item per line, ``#`` starts a comment)::

    minimize  c_0 c_1 ... c_n
    <name>:   a_0 a_1 ... a_n  (<=|>=|=)  rhs
    lower     l_0 ... l_n        # optional, default 0
    upper     u_0 ... u_n        # optional, default 1
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import SolverError, ValidationError
from .model import PhotonDistribution

RELATIONS = ("<=", ">=", "=")

_PIVOT_TOL = 1e-11
_COST_TOL = 1e-11
_PHASE1_TOL = 1e-11
_MAX_TIE_BASES = 256
_STALL_LIMIT = 25
_NOISE_FACTOR = 1e3


@dataclass(frozen=True, eq=False)
class Constraint:
    coeffs: np.ndarray
    relation: str
    rhs: float
    name: str = ""

    def __post_init__(self) -> None:
        a = np.array(self.coeffs, dtype=float).ravel()
        a.setflags(write=False)
        object.__setattr__(self, "coeffs", a)
        if self.relation not in RELATIONS:
            raise ValidationError(f"unknown relation {self.relation!r}")
        if not math.isfinite(self.rhs) or not np.all(np.isfinite(a)):
            raise ValidationError(f"constraint {self.name!r} has non-finite entries")

    def residual(self, x: np.ndarray) -> float:
        """Amount by which ``x`` violates this row (0 when satisfied)."""
        lhs = float(np.dot(self.coeffs, x))
        if self.relation == "<=":
            return max(0.0, lhs - self.rhs)
        if self.relation == ">=":
            return max(0.0, self.rhs - lhs)
        return abs(lhs - self.rhs)


@dataclass(frozen=True, eq=False)
class LpProblem:
    """Minimize ``objective . p`` subject to ``rows`` and box bounds."""

    objective: np.ndarray
    rows: tuple[Constraint, ...]
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self) -> None:
        c = np.array(self.objective, dtype=float).ravel()
        c.setflags(write=False)
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "rows", tuple(self.rows))
        n = c.size
        lo = np.zeros(n) if self.lower is None else np.array(self.lower, dtype=float).ravel()
        hi = np.ones(n) if self.upper is None else np.array(self.upper, dtype=float).ravel()
        for arr in (lo, hi):
            arr.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

        if n == 0 or not np.all(np.isfinite(c)):
            raise ValidationError("objective must be a non-empty finite vector")
        if lo.size != n or hi.size != n:
            raise ValidationError("bounds must have one entry per variable")
        if np.any(lo < 0) or np.any(hi > 1) or np.any(lo > hi):
            raise ValidationError("variable bounds must satisfy 0 <= lower <= upper <= 1")
        for row in self.rows:
            if row.coeffs.size != n:
                raise ValidationError(
                    f"row {row.name!r} has {row.coeffs.size} coefficients, expected {n}")
        if not any(_is_normalization(r) for r in self.rows):
            raise ValidationError("problem lacks the normalization row sum(p) = 1")

    @property
    def n_vars(self) -> int:
        return self.objective.size

    @property
    def equality_rows(self) -> tuple[Constraint, ...]:
        return tuple(r for r in self.rows if r.relation == "=")

    @property
    def inequality_rows(self) -> tuple[Constraint, ...]:
        return tuple(r for r in self.rows if r.relation != "=")

    def max_residual(self, x: np.ndarray) -> float:
        """Largest violation of any row or bound at ``x``."""
        x = np.asarray(x, dtype=float)
        worst = max((r.residual(x) for r in self.rows), default=0.0)
        worst = max(worst, float(np.max(self.lower - x, initial=0.0)))
        return max(worst, float(np.max(x - self.upper, initial=0.0)))


def _is_normalization(row: Constraint) -> bool:
    return row.relation == "=" and row.rhs == 1.0 and bool(np.all(row.coeffs == 1.0))


@dataclass(frozen=True, eq=False)
class LpSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    value: float = math.nan
    x: np.ndarray | None = None
    active_basis: tuple[str, ...] = ()
    certificate: dict[str, float] = field(default_factory=dict)
    message: str = ""
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    @property
    def witness(self) -> PhotonDistribution | None:
        if self.x is None:
            return None
        return PhotonDistribution(self.x)


class _StandardForm:
    """Equality form ``A z = b, z >= 0`` of an :class:`LpProblem`.

    Columns: shifted structural variables, one slack/surplus per inequality,
    one upper-bound slack per variable.
    """

    def __init__(self, problem: LpProblem):
        n = problem.n_vars
        lo, hi = problem.lower, problem.upper
        ineq = [r for r in problem.rows if r.relation != "="]
        m_rows = len(problem.rows)
        m = m_rows + n
        ncols = n + len(ineq) + n
        A = np.zeros((m, ncols))
        b = np.zeros(m)
        names = [f"p{j}" for j in range(n)]
        s = n
        for i, row in enumerate(problem.rows):
            A[i, :n] = row.coeffs
            b[i] = row.rhs - float(np.dot(row.coeffs, lo))
            if row.relation != "=":
                A[i, s] = 1.0 if row.relation == "<=" else -1.0
                names.append(f"slack:{row.name or i}")
                s += 1
        for j in range(n):
            A[m_rows + j, j] = 1.0
            A[m_rows + j, s + j] = 1.0
            b[m_rows + j] = hi[j] - lo[j]
            names.append(f"upper:p{j}")
        sign = np.where(b < 0, -1.0, 1.0)
        self.A = A * sign[:, None]
        self.b = b * sign
        self.sign = sign
        self.c = np.concatenate([problem.objective, np.zeros(ncols - n)])
        self.names = names
        self.n = n
        self.lo = lo
        self.row_names = [r.name or str(i) for i, r in enumerate(problem.rows)] + \
                         [f"upper:p{j}" for j in range(n)]


class _Simplex:
    def __init__(self, A: np.ndarray, b: np.ndarray, max_iter: int):
        self.A = A
        self.b = b
        self.max_iter = max_iter
        self.iterations = 0
        self._col_norm = np.abs(A).max(axis=0)

    def _factor(self, basis: Sequence[int]):
        B = self.A[:, basis]
        try:
            xB = np.linalg.solve(B, self.b)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"singular basis {list(basis)}") from exc
        return B, xB

    def duals(self, basis: Sequence[int], c: np.ndarray) -> np.ndarray:
        B = self.A[:, basis]
        return np.linalg.solve(B.T, c[list(basis)])

    def reduced_costs(self, basis: Sequence[int], c: np.ndarray) -> np.ndarray:
        return self.pricing(basis, c)[0]

    def pricing(self, basis: Sequence[int], c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Reduced costs and their rounding-noise scale per column."""
        y = self.duals(basis, c)
        d = c - self.A.T @ y
        scale = max(1.0, float(np.abs(c).max()), float(np.abs(y).max()))
        tol = _COST_TOL * scale * (1.0 + self._col_norm)
        return d, tol

    def ratio_rows(self, basis: Sequence[int], j: int, xB: np.ndarray) -> tuple[list[int], bool]:
        """Rows attaining the minimum ratio for entering column ``j``."""
        B = self.A[:, basis]
        w = np.linalg.solve(B, self.A[:, j])
        cand = np.flatnonzero(w > _PIVOT_TOL)
        if cand.size == 0:
            return [], True
        ratios = np.maximum(xB[cand], 0.0) / w[cand]
        best = ratios.min()
        scale = max(1.0, abs(best))
        rows = [int(i) for i, r in zip(cand, ratios) if r <= best + 1e-13 * scale]
        return rows, False

    def run(self, basis: list[int], c: np.ndarray, allowed: np.ndarray) -> tuple[list[int], str]:
        """Simplex from a feasible ``basis``; returns (basis, status).

        Dantzig pricing, switching to Bland's rule after a run of degenerate
        pivots.  A basis revisited under Bland's rule can only come from
        rounding noise in the reduced costs; if every remaining candidate is
        within a few orders of that noise the run stops as optimal.
        """
        visited = {tuple(sorted(basis))}
        stall = 0
        last_obj = math.inf
        while True:
            if self.iterations >= self.max_iter:
                raise SolverError(f"simplex exceeded {self.max_iter} iterations")
            _, xB = self._factor(basis)
            obj = float(c[basis] @ xB)
            if obj < last_obj - 1e-14 * max(1.0, abs(obj)):
                stall = 0
            else:
                stall += 1
            last_obj = min(last_obj, obj)
            d, tol = self.pricing(basis, c)
            in_basis = np.zeros(self.A.shape[1], dtype=bool)
            in_basis[basis] = True
            candidates = np.flatnonzero((d < -tol) & ~in_basis & allowed)
            if candidates.size == 0:
                return basis, "optimal"
            bland = stall > _STALL_LIMIT
            if bland:
                j = int(candidates[0])
            else:
                j = int(candidates[np.argmin(d[candidates] / (1.0 + self._col_norm[candidates]))])
            rows, unbounded = self.ratio_rows(basis, j, xB)
            if unbounded:
                return basis, "unbounded"
            leave = min(rows, key=lambda r: basis[r])
            basis = list(basis)
            basis[leave] = j
            self.iterations += 1
            key = tuple(sorted(basis))
            if key in visited and bland:
                if np.all(d[candidates] > -_NOISE_FACTOR * tol[candidates]):
                    return basis, "optimal"
                stall = 0
            visited.add(key)


def solve_lp(problem: LpProblem, max_iter: int = 5000) -> LpSolution:
    """Exact optimum of a small LP.

    Among alternative optimal bases the one whose sorted column indices are
    lexicographically smallest is reported (search capped at a few hundred
    bases), so the witness is deterministic.
    """
    sf = _StandardForm(problem)
    m, ncols = sf.A.shape

    # phase 1: artificials on every row
    A1 = np.hstack([sf.A, np.eye(m)])
    c1 = np.concatenate([np.zeros(ncols), np.ones(m)])
    simplex = _Simplex(A1, sf.b, max_iter)
    basis = list(range(ncols, ncols + m))
    allowed = np.ones(ncols + m, dtype=bool)
    basis, _ = simplex.run(basis, c1, allowed)
    _, xB = simplex._factor(basis)
    infeas = float(sum(x for x, j in zip(xB, basis) if j >= ncols))
    if infeas > _PHASE1_TOL * max(1.0, float(np.abs(sf.b).max())):
        y = simplex.duals(basis, c1) * sf.sign
        cert = {name: float(v) for name, v in zip(sf.row_names, y) if abs(v) > 1e-15}
        return LpSolution(
            "infeasible", certificate=cert, iterations=simplex.iterations,
            message=(f"phase-1 residual {infeas:.3e} > 0; row multipliers give a "
                     "Farkas combination whose left side cannot reach its right side"))

    # artificials that cannot be pivoted out sit on redundant rows at level 0;
    # they stay basic but may never re-enter
    basis = _drive_out_artificials(A1, basis, ncols)
    c2 = np.concatenate([sf.c, np.zeros(m)])
    allowed = np.arange(ncols + m) < ncols
    basis, status = simplex.run(basis, c2, allowed)
    if status == "unbounded":
        return LpSolution("unbounded", iterations=simplex.iterations,
                          message="objective decreases without bound")

    basis = _lexicographic_optimal_basis(simplex, basis, c2, allowed)
    _, xB = simplex._factor(basis)
    z = np.zeros(ncols + m)
    z[basis] = xB
    x = np.clip(z[:sf.n] + sf.lo, problem.lower, problem.upper)
    value = float(np.dot(problem.objective, x))
    names = sf.names + [f"artificial:{r}" for r in sf.row_names]
    return LpSolution(
        "optimal", value=value, x=x,
        active_basis=tuple(names[j] for j in sorted(basis)),
        iterations=simplex.iterations)


def _drive_out_artificials(A1: np.ndarray, basis: list[int], ncols: int) -> list[int]:
    """Pivot zero-level artificials out; rows where that fails are redundant."""
    basis = list(basis)
    for r, j in enumerate(basis):
        if j < ncols:
            continue
        B = A1[:, basis]
        # row r of B^-1 A gives the pivot candidates for this row
        e = np.zeros(len(basis))
        e[r] = 1.0
        row = np.linalg.solve(B.T, e) @ A1[:, :ncols]
        in_basis = set(basis)
        for k in np.flatnonzero(np.abs(row) > 1e-9):
            if int(k) not in in_basis:
                basis[r] = int(k)
                break
    return basis


def _lexicographic_optimal_basis(simplex: _Simplex, basis: list[int], c: np.ndarray,
                                 allowed: np.ndarray) -> list[int]:
    d, tol = simplex.pricing(basis, c)
    nonbasic = np.setdiff1d(np.flatnonzero(allowed), basis)
    if not np.any(np.abs(d[nonbasic]) <= tol[nonbasic]):
        return basis  # unique optimal vertex

    start = tuple(sorted(basis))
    seen = {start}
    queue = deque([list(basis)])
    best = start
    while queue and len(seen) < _MAX_TIE_BASES:
        cur = queue.popleft()
        _, xB = simplex._factor(cur)
        d, tol = simplex.pricing(cur, c)
        for j in range(len(c)):
            if not allowed[j] or j in cur or abs(d[j]) > tol[j]:
                continue
            rows, unbounded = simplex.ratio_rows(cur, j, xB)
            if unbounded:
                continue
            for r in rows:
                nxt = list(cur)
                nxt[r] = j
                key = tuple(sorted(nxt))
                if key in seen:
                    continue
                try:
                    _, xn = simplex._factor(nxt)
                    dn, tn = simplex.pricing(nxt, c)
                except SolverError:
                    continue
                seen.add(key)
                if np.all(xn >= -1e-12) and np.all(dn[allowed] >= -tn[allowed]):
                    queue.append(nxt)
                    best = min(best, key)
    return list(best)


# ---------------------------------------------------------------------------
# text serialization

def format_number(x: float) -> str:
    """Round-trip exact rendering with 17 significant digits."""
    return f"{x:.16e}"


def _format_vector(v: Iterable[float]) -> str:
    return " ".join(format_number(float(x)) for x in v)


def dump_problem(problem: LpProblem) -> str:
    lines = [f"minimize {_format_vector(problem.objective)}"]
    for i, row in enumerate(problem.rows):
        name = row.name or f"r{i}"
        lines.append(f"{name}: {_format_vector(row.coeffs)} {row.relation} {format_number(row.rhs)}")
    if np.any(problem.lower != 0.0):
        lines.append(f"lower {_format_vector(problem.lower)}")
    if np.any(problem.upper != 1.0):
        lines.append(f"upper {_format_vector(problem.upper)}")
    return "\n".join(lines) + "\n"


class LpParseError(ValidationError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


def _parse_floats(tokens: Sequence[str], lineno: int) -> list[float]:
    try:
        values = [float(t) for t in tokens]
    except ValueError as exc:
        raise LpParseError(lineno, f"not a number ({exc})") from None
    if not all(math.isfinite(v) for v in values):
        raise LpParseError(lineno, "non-finite value")
    return values


def parse_problem(text: str) -> LpProblem:
    objective = None
    rows: list[Constraint] = []
    lower = upper = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        if head in ("minimize", "lower", "upper"):
            values = _parse_floats(rest.split(), lineno)
            if not values:
                raise LpParseError(lineno, f"'{head}' needs coefficients")
            if head == "minimize":
                if objective is not None:
                    raise LpParseError(lineno, "duplicate objective")
                objective = values
            elif head == "lower":
                lower = values
            else:
                upper = values
            continue
        name = ""
        if ":" in line:
            name, _, line = line.partition(":")
            name = name.strip()
        tokens = line.split()
        rel_pos = [i for i, t in enumerate(tokens) if t in RELATIONS]
        if len(rel_pos) != 1 or rel_pos[0] != len(tokens) - 2 or rel_pos[0] == 0:
            raise LpParseError(lineno, "expected 'coefficients <=|>=|= rhs'")
        k = rel_pos[0]
        coeffs = _parse_floats(tokens[:k], lineno)
        rhs = _parse_floats(tokens[k + 1:], lineno)[0]
        if objective is not None and len(coeffs) != len(objective):
            raise LpParseError(lineno, f"{len(coeffs)} coefficients, expected {len(objective)}")
        rows.append(Constraint(coeffs, tokens[k], rhs, name))
    if objective is None:
        raise LpParseError(0, "missing 'minimize' line")
    try:
        return LpProblem(objective, tuple(rows), lower, upper)
    except ValidationError as exc:
        raise LpParseError(0, str(exc)) from None


def dump_solution(sol: LpSolution) -> str:
    lines = [f"status {sol.status}"]
    if sol.optimal:
        lines.append(f"value {format_number(sol.value)}")
        lines.append(f"witness {_format_vector(sol.x)}")
        lines.append("basis " + " ".join(sol.active_basis))
    if sol.certificate:
        lines.append("certificate " + " ".join(
            f"{k}={format_number(v)}" for k, v in sol.certificate.items()))
    if sol.message:
        lines.append(f"message {sol.message}")
    return "\n".join(lines) + "\n"
