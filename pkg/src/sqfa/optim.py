"""Limited-memory BFGS with a strong-Wolfe line search.

A small, deterministic minimizer: fixed evaluation order, no internal
randomness, pure float64 arithmetic, so repeated runs from the same start
are bit-identical. The caller supplies a fused value-and-gradient
callable; every line-search probe evaluates both.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

WOLFE_C1 = 1e-4
WOLFE_C2 = 0.9


@dataclass
class IterationRecord:
    iteration: int
    objective: float
    grad_norm: float
    step_size: float


@dataclass
class MinimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    converged: bool
    n_iters: int
    line_search_failed: bool
    first_step_failed: bool
    history: list[IterationRecord] = field(default_factory=list)


def minimize_lbfgs(
    value_and_grad,
    x0: np.ndarray,
    tol: float = 1e-6,
    max_iters: int = 500,
    memory: int = 10,
    c1: float = WOLFE_C1,
    c2: float = WOLFE_C2,
) -> MinimizeResult:
    """Minimize a smooth function with L-BFGS.

    Stops when the absolute objective change between accepted iterates is
    at most ``tol``, or after ``max_iters`` iterations. Accepted iterates
    satisfy the Armijo condition, so the objective sequence is strictly
    decreasing.
    """
    x = np.asarray(x0, dtype=float).copy()
    f, g = value_and_grad(x)
    history = [IterationRecord(0, f, float(np.linalg.norm(g)), 0.0)]
    s_list: list[np.ndarray] = []
    y_list: list[np.ndarray] = []
    rho_list: list[float] = []

    converged = False
    ls_failed = False
    first_failed = False
    iters_used = 0

    for it in range(1, max_iters + 1):
        d = -_two_loop(g, s_list, y_list, rho_list)
        dphi0 = float(d @ g)
        if dphi0 >= 0.0:
            # stale curvature pairs; restart from steepest descent
            s_list.clear()
            y_list.clear()
            rho_list.clear()
            d = -g
            dphi0 = -float(g @ g)
            if dphi0 == 0.0:
                converged = True
                break

        def evaluate(alpha, _x=x, _d=d):
            xa = _x + alpha * _d
            fa, ga = value_and_grad(xa)
            return fa, ga, float(ga @ _d), xa

        gnorm = float(np.linalg.norm(g))
        alpha0 = min(1.0, 1.0 / max(gnorm, 1e-12)) if it == 1 else 1.0
        step = _line_search_strong_wolfe(evaluate, f, dphi0, alpha0, c1, c2)
        if step is None:
            ls_failed = True
            first_failed = it == 1
            break
        alpha, f_new, g_new, x_new = step
        iters_used = it
        history.append(
            IterationRecord(it, f_new, float(np.linalg.norm(g_new)), alpha)
        )

        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-10 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            s_list.append(s)
            y_list.append(y)
            rho_list.append(1.0 / sy)
            if len(s_list) > memory:
                s_list.pop(0)
                y_list.pop(0)
                rho_list.pop(0)

        delta = abs(f - f_new)
        x, f, g = x_new, f_new, g_new
        if delta <= tol:
            converged = True
            break

    return MinimizeResult(
        x=x,
        fun=f,
        grad=g,
        converged=converged,
        n_iters=iters_used,
        line_search_failed=ls_failed,
        first_step_failed=first_failed,
        history=history,
    )


def _two_loop(
    g: np.ndarray,
    s_list: list[np.ndarray],
    y_list: list[np.ndarray],
    rho_list: list[float],
) -> np.ndarray:
    """Two-loop recursion: apply the inverse-Hessian approximation to g."""
    q = g.copy()
    alphas = []
    for s, y, rho in zip(reversed(s_list), reversed(y_list), reversed(rho_list)):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    if y_list:
        y_last = y_list[-1]
        q *= float(s_list[-1] @ y_last) / float(y_last @ y_last)
    for (s, y, rho), a in zip(
        zip(s_list, y_list, rho_list), reversed(alphas)
    ):
        b = rho * float(y @ q)
        q += (a - b) * s
    return q


def _line_search_strong_wolfe(
    evaluate, f0, dphi0, alpha0, c1, c2, max_expand=20, max_zoom=30
):
    """Bracket-and-zoom strong-Wolfe line search.

    ``evaluate(alpha)`` returns (f, grad, dphi, x) at x0 + alpha * d.
    Returns (alpha, f, grad, x) or None when no improving step exists. If
    the curvature condition cannot be met in the zoom budget, falls back
    to the best Armijo point so the outer loop never accepts an increase.
    """
    if dphi0 >= 0.0:
        return None
    alpha_prev, f_prev = 0.0, f0
    alpha = alpha0
    result_prev = None
    for i in range(max_expand):
        f, g, dphi, x = evaluate(alpha)
        if f > f0 + c1 * alpha * dphi0 or (i > 0 and f >= f_prev):
            return _zoom(
                evaluate, f0, dphi0, c1, c2,
                alpha_prev, f_prev, result_prev, alpha, max_zoom,
            )
        if abs(dphi) <= -c2 * dphi0:
            return alpha, f, g, x
        if dphi >= 0.0:
            return _zoom(
                evaluate, f0, dphi0, c1, c2,
                alpha, f, (alpha, f, g, x), alpha_prev, max_zoom,
            )
        alpha_prev, f_prev = alpha, f
        result_prev = (alpha, f, g, x)
        alpha *= 2.0
    # monotone descent all the way out; take the furthest Armijo point
    return result_prev


def _zoom(evaluate, f0, dphi0, c1, c2, a_lo, f_lo, best_lo, a_hi, max_zoom):
    """Shrink [a_lo, a_hi] keeping a_lo the best Armijo point seen."""
    for _ in range(max_zoom):
        if abs(a_hi - a_lo) <= 1e-14 * max(1.0, abs(a_lo)):
            break
        alpha = 0.5 * (a_lo + a_hi)
        f, g, dphi, x = evaluate(alpha)
        if f > f0 + c1 * alpha * dphi0 or f >= f_lo:
            a_hi = alpha
        else:
            if abs(dphi) <= -c2 * dphi0:
                return alpha, f, g, x
            if dphi * (a_hi - a_lo) >= 0.0:
                a_hi = a_lo
            a_lo, f_lo = alpha, f
            best_lo = (alpha, f, g, x)
    # curvature never satisfied: fall back to the best Armijo point
    return best_lo
