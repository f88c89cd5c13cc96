"""Dense strictly-convex box-constrained QP via a primal active-set method.

    minimize  0.5 x'Hx + g'x   s.t.  lb <= x <= ub

Tiny dense problems (d ~ 40) solved many times with slowly varying data, so
the design priorities are warm-starting and determinism, not asymptotics.
Each working-set change refactorizes the free block (cheap at this scale).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

STATIONARITY_TOL = 1e-8
FEASIBILITY_TOL = 1e-12


@dataclass(frozen=True)
class QpProblem:
    H: np.ndarray   # symmetric positive definite (d, d)
    g: np.ndarray   # (d,)
    lb: np.ndarray  # (d,), -inf allowed
    ub: np.ndarray  # (d,), +inf allowed

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ValueError("H must be square")
        if np.max(np.abs(H - H.T)) > 1e-10:
            raise ValueError("H must be symmetric within 1e-10")

    @property
    def dim(self) -> int:
        return len(self.g)


@dataclass
class QpSolution:
    x: np.ndarray
    status: str                 # "optimal" | "max_iter" | "infeasible_bounds"
    active_set: np.ndarray      # +1 at upper bound, -1 at lower, 0 free
    iterations: int
    objective: float = field(default=np.nan)


def dump_problem(p: QpProblem) -> str:
    """Plain-text matrix dump: d, then H row-major, g, lb, ub."""
    lines = [str(p.dim)]
    for row in p.H:
        lines.append(" ".join(repr(float(v)) for v in row))
    for vec in (p.g, p.lb, p.ub):
        lines.append(" ".join(repr(float(v)) for v in vec))
    return "\n".join(lines) + "\n"


def parse_problem(text: str) -> QpProblem:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    d = int(lines[0])
    H = np.array([[float(v) for v in lines[1 + i].split()] for i in range(d)])
    g, lb, ub = (np.array([float(v) for v in lines[1 + d + k].split()]) for k in range(3))
    return QpProblem(H, g, lb, ub)


def solve_box_qp(p: QpProblem, warm_start: np.ndarray | None = None,
                 max_iter: int | None = None) -> QpSolution:
    """Primal active-set iterations from a clipped warm start."""
    d = p.dim
    H, g, lb, ub = p.H, p.g, np.asarray(p.lb, float), np.asarray(p.ub, float)
    if np.any(lb > ub):
        x = np.clip(np.zeros(d), lb, np.where(ub >= lb, ub, lb))
        return QpSolution(x, "infeasible_bounds", np.zeros(d, dtype=int), 0)
    if max_iter is None:
        max_iter = 10 * max(d, 1)

    x = np.zeros(d) if warm_start is None else np.asarray(warm_start, float).copy()
    x = np.clip(x, lb, ub)

    # working set: -1 fixed at lower, +1 fixed at upper, 0 free
    W = np.zeros(d, dtype=int)
    W[x <= lb] = -1
    W[x >= ub] = 1
    # variables with lb == ub stay fixed forever
    pinned = lb == ub

    it = 0
    while it < max_iter:
        it += 1
        free = W == 0
        xt = x.copy()
        if np.any(free):
            Hff = H[np.ix_(free, free)]
            rhs = -(g[free] + H[np.ix_(free, ~free)] @ x[~free]) if np.any(~free) else -g[free]
            xt[free] = np.linalg.solve(Hff, rhs)
        step = xt - x

        if np.max(np.abs(step)) <= 1e-14:
            # stationary on the working set: check bound multipliers
            grad = H @ x + g
            viol = -np.inf
            worst = -1
            for i in range(d):
                if W[i] == 0 or pinned[i]:
                    continue
                # minimize: at lower bound need grad >= 0, at upper grad <= 0
                slack = grad[i] if W[i] == -1 else -grad[i]
                if slack < -STATIONARITY_TOL and -slack > viol:
                    viol = -slack
                    worst = i
            if worst == -1:
                obj = 0.5 * x @ H @ x + g @ x
                return QpSolution(x, "optimal", W.copy(), it, obj)
            W[worst] = 0
            continue

        # longest feasible step toward xt
        alpha = 1.0
        blocker = -1
        bound = 0
        for i in np.nonzero(free)[0]:
            if step[i] > 0 and np.isfinite(ub[i]):
                a = (ub[i] - x[i]) / step[i]
                if a < alpha - 1e-15:
                    alpha, blocker, bound = a, i, 1
            elif step[i] < 0 and np.isfinite(lb[i]):
                a = (lb[i] - x[i]) / step[i]
                if a < alpha - 1e-15:
                    alpha, blocker, bound = a, i, -1
        x = x + max(alpha, 0.0) * step
        if blocker >= 0:
            x[blocker] = ub[blocker] if bound == 1 else lb[blocker]
            W[blocker] = bound
        x = np.clip(x, lb, ub)

    obj = 0.5 * x @ H @ x + g @ x
    return QpSolution(np.clip(x, lb, ub), "max_iter", W.copy(), it, obj)


def kkt_residual(p: QpProblem, x: np.ndarray) -> float:
    """Max violation of the box-QP KKT conditions at x."""
    grad = p.H @ x + p.g
    res = 0.0
    for i in range(p.dim):
        at_lb = x[i] <= p.lb[i] + 1e-9
        at_ub = x[i] >= p.ub[i] - 1e-9
        if at_lb and at_ub:
            continue  # pinned variable, multiplier unconstrained
        if at_lb:
            res = max(res, max(0.0, -grad[i]))
        elif at_ub:
            res = max(res, max(0.0, grad[i]))
        else:
            res = max(res, abs(grad[i]))
    return res
