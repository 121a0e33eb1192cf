"""PARTAN Frank-Wolfe: a FW step followed by extrapolation through the
previous iterate,

    alpha_tilde = (1 - lam) alpha + lam e_i
    alpha_next  = alpha_tilde + mu (alpha_tilde - alpha_prev)

The memory carries the previous iterate, its gradient and objective, and the
cross term W = alpha_prev' K alpha, which is all the extra line search needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .solver import (DENOM_TOL, NEG_TOL, PARTAN, PRUNE_TOL, InvalidStateError, SolverState,
                     StepRecord, fw_line_search, fw_objective, gradient_on_demand)

MU_CAP = 1e6


@dataclass
class PartanMemory:
    alpha_prev: np.ndarray
    g_prev: np.ndarray | None
    f_prev: float
    W: float

    def grad_prev(self, kernel, i: int) -> float:
        if self.g_prev is not None:
            return float(self.g_prev[i])
        return gradient_on_demand(kernel, self.alpha_prev, i)


def cross_term(s: SolverState, alpha_other: np.ndarray) -> float:
    """alpha_other' K alpha, using the gradient of ``s``."""
    support = np.flatnonzero(alpha_other)
    return float(alpha_other[support] @ s.grad(support))


def start_memory(alpha0: np.ndarray, g0: np.ndarray | None, f0: float, s1: SolverState) -> PartanMemory:
    """Memory after the initial plain FW step alpha0 -> s1; W = alpha0' K alpha1."""
    return PartanMemory(alpha0.copy(), None if g0 is None else g0.copy(), f0, cross_term(s1, alpha0))


def mu_feasibility_cap(alpha_tilde: np.ndarray, alpha_prev: np.ndarray) -> float:
    """Largest mu keeping alpha_tilde + mu (alpha_tilde - alpha_prev) >= 0."""
    shrink = np.flatnonzero(alpha_tilde < alpha_prev)
    if shrink.size == 0:
        return MU_CAP
    ratios = alpha_tilde[shrink] / (alpha_prev[shrink] - alpha_tilde[shrink])
    return float(min(ratios.min(), MU_CAP))


def cross_tilde(mem: PartanMemory, lam: float, g_prev_i: float) -> float:
    """alpha_tilde' K alpha_prev."""
    return (1.0 - lam) * mem.W + lam * g_prev_i


def partan_mu(s: SolverState, mem: PartanMemory, lam: float, f_tilde: float, i_star: int,
              mu_max: float = MU_CAP, g_prev_i: float | None = None) -> float:
    """Exact minimizer of f(alpha_tilde + mu (alpha_tilde - alpha_prev)) on [0, mu_max].

    Returns 0 when alpha_tilde coincides with alpha_prev (zero curvature).
    """
    if g_prev_i is None:
        g_prev_i = mem.grad_prev(s.kernel, i_star)
    A = cross_tilde(mem, lam, g_prev_i)
    den = 2.0 * (f_tilde - A + mem.f_prev)
    if den <= DENOM_TOL:
        return 0.0
    return min(max((A - 2.0 * f_tilde) / den, 0.0), mu_max)


def partan_objective(f_tilde: float, A: float, f_prev: float, mu: float) -> float:
    # (1+mu)^2 f~ - mu(1+mu) A + mu^2 f_prev, grouped to avoid cancellation at large mu
    return f_tilde + mu * (2.0 * f_tilde - A) + mu * mu * (f_tilde - A + f_prev)


def update_W(mem: PartanMemory, s: SolverState, lam: float, mu: float, i_star: int,
             g_i: float | None = None) -> float:
    """alpha' K alpha_next from the pre-step state ``s`` and memory."""
    if g_i is None:
        g_i = s.grad(i_star)
    c = (1.0 - lam) * 2.0 * s.f + lam * g_i
    return c + mu * (c - mem.W)


def apply_partan_step(s: SolverState, mem: PartanMemory, i_star: int, lam: float, mu: float, *,
                      g_i: float | None = None, g_prev_i: float | None = None,
                      gap_before: float = math.nan) -> StepRecord:
    """Commit one PARTAN step, updating state and rotating the memory in place."""
    kern = s.kernel
    if g_i is None:
        g_i = s.grad(i_star)
    if g_prev_i is None:
        g_prev_i = mem.grad_prev(kern, i_star)
    k_ii = kern.diag(i_star)
    f_tilde = fw_objective(s.f, g_i, k_ii, lam)
    A = cross_tilde(mem, lam, g_prev_i)

    a_t = s.alpha * (1.0 - lam)
    a_t[i_star] += lam
    a_new = a_t + mu * (a_t - mem.alpha_prev)
    low = np.flatnonzero((a_new < PRUNE_TOL) & (a_new != 0.0))
    if low.size:
        worst = a_new[low].min()
        if worst < -NEG_TOL:
            raise InvalidStateError(f"PARTAN step left the simplex (weight {worst:.3e}, mu={mu})")
        a_new[low] = 0.0
        a_new /= a_new.sum()

    W_next = update_W(mem, s, lam, mu, i_star, g_i)
    f_new = partan_objective(f_tilde, A, mem.f_prev, mu)

    if s.g is not None:
        g_t = s.g * (1.0 - lam)
        g_t += lam * kern.column(i_star)
        g_new = g_t + mu * (g_t - mem.g_prev)
        mem.g_prev = s.g
        s.g = g_new

    mem.alpha_prev = s.alpha
    mem.f_prev = s.f
    mem.W = W_next
    s.alpha = a_new
    s.f = f_new
    s.k += 1
    return StepRecord(PARTAN, lam, i_star, gap_before, mu=mu)


def partan_iteration(s: SolverState, mem: PartanMemory, i_star: int, *,
                     g_i: float | None = None, gap_before: float = math.nan,
                     force_mu_zero: bool = False) -> StepRecord:
    """Line searches for lam and mu at vertex ``i_star`` followed by the step."""
    if g_i is None:
        g_i = s.grad(i_star)
    lam = fw_line_search(s, i_star, g_i)
    mu = 0.0
    g_prev_i = mem.grad_prev(s.kernel, i_star)
    if not force_mu_zero:
        f_tilde = fw_objective(s.f, g_i, s.kernel.diag(i_star), lam)
        a_t = s.alpha * (1.0 - lam)
        a_t[i_star] += lam
        mu_max = mu_feasibility_cap(a_t, mem.alpha_prev)
        mu = partan_mu(s, mem, lam, f_tilde, i_star, mu_max, g_prev_i)
    return apply_partan_step(s, mem, i_star, lam, mu, g_i=g_i, g_prev_i=g_prev_i,
                             gap_before=gap_before)


def repair_memory(mem: PartanMemory, s: SolverState) -> None:
    """Recompute g_prev, f_prev and W directly (drift repair)."""
    support = np.flatnonzero(mem.alpha_prev)
    if support.size == 0:
        raise InvalidStateError("empty previous support")
    if mem.g_prev is not None:
        g = np.zeros(s.m)
        for j in support:
            g += mem.alpha_prev[j] * s.kernel.column(j)
        mem.g_prev = g
        mem.f_prev = 0.5 * float(mem.alpha_prev[support] @ g[support])
    else:
        gs = gradient_on_demand(s.kernel, mem.alpha_prev, support)
        mem.f_prev = 0.5 * float(mem.alpha_prev[support] @ gs)
    mem.W = cross_term(s, mem.alpha_prev)
