"""A small convex-program container on top of cvxpy.

Only the shapes the beamforming programs need are exposed: scalar and vector
variables, Hermitian matrix variables, linear constraints over trace inner
products, second-order and rotated cones, and PSD constraints. Programs are
built once and re-solved with new parameter values, which keeps the bisection
loops from recompiling.
"""
from __future__ import annotations

import enum
import time
import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

DEFAULT_TOL = 1e-11  # solver stopping tolerance (gap and feasibility)
ACCEPT_TOL = 1e-7  # largest constraint residual accepted from a reduced-accuracy stop
RELAXED_TOL = 1e-8
RELAXED_ACCEPT_TOL = 1e-6


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    INACCURATE = "Inaccurate"
    UNBOUNDED = "Unbounded"


_STATUS_MAP = {
    cp.OPTIMAL: Status.OPTIMAL,
    cp.OPTIMAL_INACCURATE: Status.INACCURATE,
    cp.INFEASIBLE: Status.INFEASIBLE,
    cp.INFEASIBLE_INACCURATE: Status.INFEASIBLE,
    cp.UNBOUNDED: Status.UNBOUNDED,
    cp.UNBOUNDED_INACCURATE: Status.UNBOUNDED,
}


@dataclass
class SolveReport:
    status: Status
    values: dict = field(default_factory=dict)
    objective: float = float("nan")
    residual: float = float("nan")
    tolerance: float = ACCEPT_TOL
    solve_time: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL

    def __getitem__(self, name):
        return self.values[name]


def is_hermitian(A, tol=1e-12) -> bool:
    A = np.asarray(A)
    return A.ndim == 2 and A.shape[0] == A.shape[1] and np.max(np.abs(A - A.conj().T), initial=0.0) <= tol * max(
        1.0, np.max(np.abs(A), initial=0.0))


class HermitianExpr:
    """A Hermitian matrix expression stored as real part (symmetric) and
    imaginary part (antisymmetric)."""

    __array_ufunc__ = None  # make numpy arrays defer to the reflected operators

    def __init__(self, re, im):
        self.re, self.im = re, im

    @property
    def shape(self):
        return self.re.shape

    def __add__(self, other):
        if isinstance(other, HermitianExpr):
            return HermitianExpr(self.re + other.re, self.im + other.im)
        other = np.asarray(other)
        return HermitianExpr(self.re + other.real, self.im + other.imag)

    __radd__ = __add__

    def __neg__(self):
        return HermitianExpr(-self.re, -self.im)

    def __sub__(self, other):
        return self + (-other if isinstance(other, HermitianExpr) else -np.asarray(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, c):
        return HermitianExpr(c * self.re, c * self.im)

    __rmul__ = __mul__

    def trace(self):
        return cp.trace(self.re)

    def matvec(self, h):
        """(re, im) of this matrix times a constant complex vector."""
        h = np.asarray(h, dtype=complex)
        return self.re @ h.real - self.im @ h.imag, self.re @ h.imag + self.im @ h.real

    @property
    def value(self):
        re, im = _value(self.re), _value(self.im)
        if re is None or im is None:
            return None
        W = re + 1j * im
        return 0.5 * (W + W.conj().T)


def _value(expr):
    return expr.value if hasattr(expr, "value") else np.asarray(expr)


class ConicProblem:
    def __init__(self, name="problem"):
        self.name = name
        self._variables = {}
        self._hermitian = {}
        self._parameters = {}
        self._constraints = []  # (label, kind, cvxpy constraint)
        self._objective = None
        self._compiled = None

    # -- declarations -------------------------------------------------------
    def _declare(self, name, obj, table):
        if self._compiled is not None:
            raise RuntimeError("problem is frozen after the first solve")
        if name in self._variables or name in self._parameters:
            raise ValueError(f"duplicate name {name!r}")
        table[name] = obj
        return obj

    def variable(self, name, shape=(), nonneg=False, lb=None, ub=None):
        v = self._declare(name, cp.Variable(shape, name=name, nonneg=nonneg), self._variables)
        if lb is not None:
            self.add(f"{name}>=lb", v >= lb)
        if ub is not None:
            self.add(f"{name}<=ub", v <= ub)
        return v

    def hermitian(self, name, n, psd=True):
        """An n x n Hermitian variable.

        With ``psd=True`` it is parametrized through a real 2n x 2n PSD matrix
        Z = [[X, -Y], [Y, X]] (up to the redundant blocks), so positive
        semidefiniteness holds by construction and the solver works on its own
        cone variable rather than an equality-linked copy.
        """
        if psd:
            Z = self._declare(name, cp.Variable((2 * n, 2 * n), name=name, PSD=True), self._variables)
            re = 0.5 * (Z[:n, :n] + Z[n:, n:])
            im = 0.5 * (Z[n:, :n] - Z[:n, n:])
        else:
            re = self._declare(name + ".re", cp.Variable((n, n), name=name + ".re", symmetric=True), self._variables)
            X = self._declare(name + ".im", cp.Variable((n, n), name=name + ".im"), self._variables)
            self.add(f"{name}.im antisymmetric", X + X.T == 0)
            im = X
        W = HermitianExpr(re, im)
        self._hermitian[name] = W
        return W

    def parameter(self, name, shape=(), nonneg=False, value=None):
        p = self._declare(name, cp.Parameter(shape, name=name, nonneg=nonneg), self._parameters)
        if value is not None:
            p.value = value
        return p

    def set(self, name, value):
        self._parameters[name].value = value

    # -- constraints ---------------------------------------------------------
    def _check_vars(self, expr):
        for v in expr.variables():
            if self._variables.get(v.name()) is not v:
                raise ValueError(f"constraint references undeclared variable {v.name()!r}")

    def _add(self, label, kind, constraint):
        if self._compiled is not None:
            raise RuntimeError("problem is frozen after the first solve")
        self._check_vars(constraint)
        self._constraints.append((label, kind, constraint))
        return constraint

    def add(self, label, constraint):
        """A linear equality or inequality built from cvxpy expressions."""
        return self._add(label, "linear", constraint)

    def add_soc(self, label, t, x):
        """||x|| <= t."""
        return self._add(label, "soc", cp.SOC(t, cp.hstack(x) if isinstance(x, (list, tuple)) else x))

    def add_rotated_cone(self, label, s, x, y):
        """s**2 <= x*y with x, y >= 0, as ||[2s; x - y]|| <= x + y."""
        return self._add(label, "soc", cp.SOC(x + y, cp.hstack([2 * s, x - y])))

    def add_hyperbolic(self, label, x, y):
        """x*y >= 1 with x, y >= 0 (encodes x >= 1/y)."""
        return self.add_rotated_cone(label, 1.0, x, y)

    def add_psd(self, label, expr):
        """expr >= 0 in the PSD order.

        ``expr`` is a real symmetric cvxpy expression or a HermitianExpr; the
        latter is constrained through its real embedding.
        """
        if isinstance(expr, HermitianExpr):
            expr = cp.bmat([[expr.re, -expr.im], [expr.im, expr.re]])
        return self._add(label, "psd", 0.5 * (expr + expr.T) >> 0)

    @staticmethod
    def inner(A, W):
        """Re trace(A W) for a constant Hermitian A and a HermitianExpr W."""
        A = np.asarray(A)
        if not is_hermitian(A):
            raise ValueError("data matrix is not Hermitian")
        # Re tr(A W) = sum(Re A * Re W) + sum(Im A * Im W) when both are Hermitian
        return cp.sum(cp.multiply(A.real, W.re)) + cp.sum(cp.multiply(A.imag, W.im))

    @staticmethod
    def quad(h, W):
        """h^H W h for a constant vector h."""
        h = np.asarray(h, dtype=complex)
        return ConicProblem.inner(np.outer(h, h.conj()), W)

    def minimize(self, expr):
        self._check_vars(expr)
        self._objective = expr

    # -- inspection ----------------------------------------------------------
    @property
    def variables(self):
        return dict(self._variables)

    @property
    def hermitian_variables(self):
        return dict(self._hermitian)

    def dump(self) -> str:
        lines = [f"problem {self.name}", f"minimize {self._objective}"]
        for label, kind, c in self._constraints:
            lines.append(f"  [{kind}] {label}: {c}")
        for name, p in self._parameters.items():
            lines.append(f"  param {name} = {p.value}")
        return "\n".join(lines)

    def _problem(self):
        if self._compiled is None:
            if self._objective is None:
                raise RuntimeError("no objective set")
            self._compiled = cp.Problem(cp.Minimize(self._objective), [c for _, _, c in self._constraints])
        return self._compiled

    def residual(self) -> float:
        worst = 0.0
        for _, _, c in self._constraints:
            with np.errstate(divide="ignore", invalid="ignore"):  # cvxpy's SOC residual at a zero vector
                v = c.violation()
            if v is None:
                return float("inf")
            worst = max(worst, float(np.max(np.atleast_1d(v), initial=0.0)))
        return worst


def solve(problem: ConicProblem, tolerance=DEFAULT_TOL, accept=ACCEPT_TOL) -> SolveReport:
    """Solve with Clarabel.

    The solver often stops one notch short of its tightest tolerances
    (reduced-accuracy termination). Such a point is reported Optimal when its
    largest constraint residual, measured independently on the cvxpy model,
    is at most ``accept``; otherwise it is Inaccurate.
    """
    prob = problem._problem()
    start = time.perf_counter()
    try:
        with warnings.catch_warnings():
            # the status is classified below; cvxpy's inaccuracy warning is redundant
            warnings.simplefilter("ignore", UserWarning)
            prob.solve(solver=cp.CLARABEL, tol_gap_abs=tolerance, tol_gap_rel=tolerance, tol_feas=tolerance,
                       tol_ktratio=max(1e-8, tolerance), max_iter=400)
        raw = prob.status
        status = _STATUS_MAP.get(raw, Status.INACCURATE)
    except cp.error.SolverError:
        raw, status = None, Status.INACCURATE
    elapsed = time.perf_counter() - start
    values = {name: v.value for name, v in problem._variables.items()}
    if not any(v is None for v in values.values()):
        values.update({name: W.value for name, W in problem._hermitian.items()})
    if any(v is None for v in values.values()):
        return SolveReport(status, {}, float("nan"), float("nan"), accept, elapsed)
    residual = problem.residual()
    if status is Status.OPTIMAL and residual > accept:
        status = Status.INACCURATE
    elif raw == cp.OPTIMAL_INACCURATE and residual <= accept:
        status = Status.OPTIMAL
    return SolveReport(status, values, float(prob.value), residual, accept, elapsed)


def solve_with_retry(problem: ConicProblem, tolerance=DEFAULT_TOL, relaxed=RELAXED_TOL) -> SolveReport:
    """Solve, and on an inaccurate result try once more at the relaxed tolerance."""
    report = solve(problem, tolerance)
    if report.status is Status.INACCURATE:
        retry = solve(problem, relaxed, RELAXED_ACCEPT_TOL)
        retry.solve_time += report.solve_time
        return retry
    return report


def hermitian_to_real_embedding(H) -> np.ndarray:
    """[[Re H, -Im H], [Im H, Re H]]: PSD iff H is, with the eigenvalues doubled."""
    H = np.asarray(H, dtype=complex)
    if not is_hermitian(H):
        raise ValueError("matrix is not Hermitian")
    return np.block([[H.real, -H.imag], [H.imag, H.real]])


def real_embedding_to_hermitian(E) -> np.ndarray:
    """Inverse of :func:`hermitian_to_real_embedding` (averages the redundant blocks)."""
    E = np.asarray(E, dtype=float)
    n = E.shape[0] // 2
    re = 0.5 * (E[:n, :n] + E[n:, n:])
    im = 0.5 * (E[n:, :n] - E[:n, n:])
    H = re + 1j * im
    return 0.5 * (H + H.conj().T)
