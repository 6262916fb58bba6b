"""Minimal convex-program contract backed by a conic interior-point solver.

``ConvexProgram`` is a thin declarative builder over cvxpy.  The backend
lifts complex quantities to interleaved real/imaginary parts and Hermitian
matrices to symmetric real blocks during canonicalization, so callers work
directly with complex expressions.  Supported constraint families: affine
equalities/inequalities, second-order cones, rotated second-order cones
(via ``quad_over_lin``), power cones (``cube_le``), exponential/log
epigraphs, log-det epigraphs over Hermitian PSD matrix variables, and PSD
membership.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

_PRIMARY_SOLVER = cp.CLARABEL
_FALLBACK_SOLVER = cp.SCS

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_FAILURE = "numerical-failure"


@dataclass
class SolveResult:
    status: str
    objective: float | None
    values: dict[str, np.ndarray | float | None] = field(default_factory=dict)
    tolerance: float = 1e-8

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OPTIMAL


class ConvexProgram:
    """Declarative convex program with named variables and parameters."""

    def __init__(self, name: str = "") -> None:
        self.name = name
        self._vars: dict[str, cp.Variable] = {}
        self._params: dict[str, cp.Parameter] = {}
        self._constraints: list = []
        self._objective: cp.problems.objective.Objective | None = None
        self._problem: cp.Problem | None = None

    # -- declaration ------------------------------------------------------
    def real(self, name: str, shape: int | tuple = (), **kwargs) -> cp.Variable:
        return self._register(cp.Variable(shape, name=name, **kwargs), name)

    def complex(self, name: str, shape: int | tuple = ()) -> cp.Variable:
        return self._register(cp.Variable(shape, name=name, complex=True), name)

    def hermitian(self, name: str, n: int) -> cp.Variable:
        return self._register(cp.Variable((n, n), name=name, hermitian=True),
                              name)

    def param(self, name: str, shape: int | tuple = (), **kwargs) -> cp.Parameter:
        p = cp.Parameter(shape, name=name, **kwargs)
        self._params[name] = p
        return p

    def _register(self, var: cp.Variable, name: str) -> cp.Variable:
        if name in self._vars:
            raise ValueError(f"duplicate variable name {name!r}")
        self._vars[name] = var
        self._problem = None
        return var

    def add(self, *constraints) -> None:
        self._constraints.extend(constraints)
        self._problem = None

    def maximize(self, expr) -> None:
        self._objective = cp.Maximize(expr)
        self._problem = None

    def minimize(self, expr) -> None:
        self._objective = cp.Minimize(expr)
        self._problem = None

    # -- solving ----------------------------------------------------------
    @property
    def problem(self) -> cp.Problem:
        if self._problem is None:
            if self._objective is None:
                raise ValueError("objective not set")
            self._problem = cp.Problem(self._objective, self._constraints)
        return self._problem

    def set_params(self, **values) -> None:
        for key, val in values.items():
            self._params[key].value = val

    def solve(self) -> SolveResult:
        import warnings

        prob = self.problem
        with warnings.catch_warnings():
            warnings.filterwarnings("ignore",
                                    message=".*Solution may be inaccurate.*")
            try:
                prob.solve(solver=_PRIMARY_SOLVER)
            except (cp.SolverError, ValueError, ArithmeticError):
                try:
                    prob.solve(solver=_FALLBACK_SOLVER, eps=1e-9,
                               max_iters=100000)
                except (cp.SolverError, ValueError, ArithmeticError) as exc:
                    return SolveResult(STATUS_FAILURE, None,
                                       {"diagnostic": str(exc)})
        return self._wrap(prob)

    def _wrap(self, prob: cp.Problem) -> SolveResult:
        status = prob.status
        if status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            tol = 1e-8 if status == cp.OPTIMAL else 1e-5
            values = {k: (v.value.copy() if isinstance(v.value, np.ndarray)
                          else v.value) for k, v in self._vars.items()}
            return SolveResult(STATUS_OPTIMAL, float(prob.value), values, tol)
        if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            return SolveResult(STATUS_INFEASIBLE, None)
        if status in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
            return SolveResult(STATUS_FAILURE, None,
                               {"diagnostic": "unbounded objective"})
        return SolveResult(STATUS_FAILURE, None, {"diagnostic": str(status)})


# ---------------------------------------------------------------------------
# expression helpers shared by the subproblem builders
# ---------------------------------------------------------------------------

def abs2(expr):
    """|expr|^2 for a complex (or real) affine scalar expression."""
    return cp.square(cp.abs(expr))


def quad_over_lin_c(expr, denom):
    """|expr|^2 / denom for complex affine ``expr`` (rotated SOC)."""
    stacked = cp.hstack([cp.real(expr), cp.imag(expr)])
    return cp.quad_over_lin(stacked, denom)


def cube_le(x, budget):
    """Constraint x^3 <= budget with x >= 0 (power cone)."""
    return cp.power(x, 3) <= budget


def logdet_rate(H: np.ndarray, W, sigma2: float):
    """Concave expression for log2 det(I + H W H^H / sigma2)."""
    M2 = H.shape[0]
    Hs = H / np.sqrt(sigma2)
    return cp.log_det(np.eye(M2) + Hs @ W @ Hs.conj().T) / np.log(2)
