"""Frank-Wolfe state and steps for min 0.5 a'Ka over the unit simplex.

The state keeps ``g = K alpha`` and ``f = 0.5 alpha' K alpha`` up to date with
closed-form recursions, so one step costs a kernel column plus O(m) work.
All closed forms come from expanding f(alpha + t d) = f + t g'd + t^2 d'Kd / 2.
In sampled mode the dense gradient is dropped and entries are evaluated on
demand from the support (see :meth:`SolverState.grad`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

PRUNE_TOL = 1e-12
NEG_TOL = 1e-9
DENOM_TOL = 1e-15
# entries this close (relative) to the extreme count as tied; lowest index wins.
# Keeps the maintained and on-demand gradients making the same choices.
TIE_RTOL = 1e-12

FW, AWAY, SWAP, PARTAN = "FW", "AWAY", "SWAP", "PARTAN"


class DegenerateStepError(ArithmeticError):
    pass


class InvalidStateError(ValueError):
    pass


@dataclass
class StepRecord:
    kind: str
    lam: float
    vertex_in: int
    gap_before: float = math.nan
    mu: float | None = None
    vertex_out: int | None = None
    drop: bool = False


class SolverState:
    """Current simplex point with its maintained gradient and objective.

    ``kernel`` needs ``m``, ``column(j)`` and ``diag(i)``. With
    ``dense_gradient=False`` the attribute ``g`` is ``None``.
    """

    def __init__(self, kernel, alpha: np.ndarray, *, dense_gradient: bool = True):
        self.kernel = kernel
        self.m = kernel.m
        self.alpha = np.asarray(alpha, dtype=float).copy()
        self.dense_gradient = dense_gradient
        self.k = 0
        self.g: np.ndarray | None = None
        self.f = 0.0
        self.f, g = recompute_exact(self)
        if dense_gradient:
            self.g = g

    @property
    def active(self) -> np.ndarray:
        """Support of alpha, ascending."""
        return np.flatnonzero(self.alpha)

    def grad(self, idx):
        """Gradient entries at ``idx`` (int or index array)."""
        if self.g is not None:
            return self.g[idx]
        return gradient_on_demand(self.kernel, self.alpha, idx)

    def repair(self) -> None:
        """Replace the maintained f (and g) by direct recomputation."""
        f, g = recompute_exact(self)
        self.f = f
        if self.g is not None:
            self.g = g

    def copy(self) -> "SolverState":
        new = object.__new__(SolverState)
        new.__dict__.update(self.__dict__)
        new.alpha = self.alpha.copy()
        new.g = None if self.g is None else self.g.copy()
        return new


def gradient_on_demand(kernel, alpha: np.ndarray, idx):
    """(K alpha)[idx] summed over the support of alpha only."""
    support = np.flatnonzero(alpha)
    scalar = np.ndim(idx) == 0
    rows = np.atleast_1d(idx)
    out = np.zeros(rows.shape[0])
    for j in support:
        out += alpha[j] * kernel.column(j)[rows]
    return float(out[0]) if scalar else out


def recompute_exact(s: SolverState) -> tuple[float, np.ndarray]:
    """Direct f = 0.5 a'Ka and g = Ka over the support, O(m |support|)."""
    support = np.flatnonzero(s.alpha)
    if support.size == 0:
        raise InvalidStateError("empty support: alpha is not on the simplex")
    g = np.zeros(s.m)
    for j in support:
        g += s.alpha[j] * s.kernel.column(j)
    f = 0.5 * float(s.alpha[support] @ g[support])
    return f, g


def init_state(kernel, start: int = 0, *, dense_gradient: bool = True) -> SolverState:
    """State at the vertex e_start."""
    if not 0 <= start < kernel.m:
        raise IndexError(f"start index {start} out of range for m={kernel.m}")
    alpha = np.zeros(kernel.m)
    alpha[start] = 1.0
    return SolverState(kernel, alpha, dense_gradient=dense_gradient)


def duality_gap(s: SolverState) -> float:
    """max over the simplex of (alpha - u)'g, i.e. 2f - min_i g_i."""
    if s.g is None:
        raise InvalidStateError("full duality gap needs the dense gradient")
    return 2.0 * s.f - float(s.g.min())


def argmin_low(values: np.ndarray) -> int:
    """Position of the minimum, near-ties going to the lowest position."""
    lo = values.min()
    return int(np.argmax(values <= lo + TIE_RTOL * max(1.0, abs(lo))))


def argmax_low(values: np.ndarray) -> int:
    hi = values.max()
    return int(np.argmax(values >= hi - TIE_RTOL * max(1.0, abs(hi))))


def select_fw_vertex(s: SolverState) -> int:
    return argmin_low(s.g)


def select_away_vertex(s: SolverState) -> int:
    support = s.active
    if support.size == 0:
        raise InvalidStateError("empty support")
    return int(support[argmax_low(s.grad(support))])


def fw_line_search(s: SolverState, i: int, g_i: float | None = None) -> float:
    """Exact minimizer of f((1-t) alpha + t e_i) over t in [0, 1]."""
    if g_i is None:
        g_i = s.grad(i)
    num = 2.0 * s.f - g_i
    den = 2.0 * s.f - 2.0 * g_i + s.kernel.diag(i)
    if den <= DENOM_TOL:
        raise DegenerateStepError(f"degenerate direction towards vertex {i}")
    return min(max(num / den, 0.0), 1.0)


def fw_objective(f: float, g_i: float, k_ii: float, lam: float) -> float:
    return (1.0 - lam) ** 2 * f + lam * (1.0 - lam) * g_i + 0.5 * lam * lam * k_ii


def _prune(s: SolverState) -> None:
    a = s.alpha
    low = np.flatnonzero((a < PRUNE_TOL) & (a != 0.0))
    if low.size:
        if a[low].min() < -NEG_TOL:
            raise InvalidStateError(f"negative weight {a[low].min():.3e}")
        a[low] = 0.0
        a /= a.sum()


def apply_fw_step(s: SolverState, i: int, lam: float, *, g_i: float | None = None,
                  gap_before: float = math.nan) -> StepRecord:
    """alpha <- (1 - lam) alpha + lam e_i, with f and g updated in closed form."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"FW step length must lie in [0, 1], got {lam}")
    rec = StepRecord(FW, lam, i, gap_before)
    if lam == 0.0:
        s.k += 1
        return rec
    if g_i is None:
        g_i = s.grad(i)
    s.f = fw_objective(s.f, g_i, s.kernel.diag(i), lam)
    if s.g is not None:
        s.g *= 1.0 - lam
        s.g += lam * s.kernel.column(i)
    if lam == 1.0:
        s.alpha[:] = 0.0
        s.alpha[i] = 1.0
    else:
        s.alpha *= 1.0 - lam
        s.alpha[i] += lam
        _prune(s)
    s.k += 1
    return rec


def away_line_search(s: SolverState, v: int, g_v: float | None = None) -> tuple[float, float]:
    """(lam, lam_max) for alpha <- (1 + lam) alpha - lam e_v."""
    a_v = s.alpha[v]
    if a_v >= 1.0:
        raise DegenerateStepError("away step from a singleton support")
    if g_v is None:
        g_v = s.grad(v)
    lam_max = a_v / (1.0 - a_v)
    num = g_v - 2.0 * s.f
    den = 2.0 * s.f - 2.0 * g_v + s.kernel.diag(v)
    if den <= DENOM_TOL:
        lam = lam_max if num > 0 else 0.0
    else:
        lam = min(max(num / den, 0.0), lam_max)
    return lam, lam_max


def away_objective(f: float, g_v: float, k_vv: float, lam: float) -> float:
    return (1.0 + lam) ** 2 * f - lam * (1.0 + lam) * g_v + 0.5 * lam * lam * k_vv


def away_step(s: SolverState, v: int | None = None, *, g_v: float | None = None,
              gap_before: float = math.nan) -> StepRecord:
    """Move weight away from the active vertex with the largest gradient.

    Raises DegenerateStepError when the support is a single vertex; callers
    fall back to a FW step.
    """
    if v is None:
        v = select_away_vertex(s)
    if g_v is None:
        g_v = s.grad(v)
    lam, lam_max = away_line_search(s, v, g_v)
    drop = lam >= lam_max
    rec = StepRecord(AWAY, lam, v, gap_before, vertex_out=v, drop=drop)
    s.k += 1
    if lam == 0.0:
        return rec
    s.f = away_objective(s.f, g_v, s.kernel.diag(v), lam)
    if s.g is not None:
        s.g *= 1.0 + lam
        s.g -= lam * s.kernel.column(v)
    s.alpha *= 1.0 + lam
    s.alpha[v] -= lam
    if drop:
        s.alpha[v] = 0.0
    _prune(s)
    return rec


def swap_line_search(s: SolverState, u: int, v: int, g_u: float, g_v: float) -> tuple[float, float]:
    """(lam, curvature) for alpha <- alpha + lam (e_u - e_v), lam in [0, alpha_v]."""
    curv = s.kernel.diag(u) - 2.0 * s.kernel.column(v)[u] + s.kernel.diag(v)
    slope = g_u - g_v
    cap = float(s.alpha[v])
    if curv <= DENOM_TOL:
        lam = cap if slope < 0 else 0.0
    else:
        lam = min(max(-slope / curv, 0.0), cap)
    return lam, curv


def swap_step(s: SolverState, u: int | None = None, v: int | None = None, *,
              g_u: float | None = None, g_v: float | None = None,
              gap_before: float = math.nan) -> StepRecord:
    """Greedy choice between the pairwise step u <- v and a plain FW step.

    Whichever gives the lower objective is committed; ties go to FW.
    """
    if u is None:
        u = select_fw_vertex(s)
    if v is None:
        v = select_away_vertex(s)
    if g_u is None:
        g_u = s.grad(u)
    lam_fw = fw_line_search(s, u, g_u)
    if u == v:
        return apply_fw_step(s, u, lam_fw, g_i=g_u, gap_before=gap_before)
    if g_v is None:
        g_v = s.grad(v)

    lam_sw, curv = swap_line_search(s, u, v, g_u, g_v)
    f_sw = s.f + lam_sw * (g_u - g_v) + 0.5 * lam_sw * lam_sw * curv
    f_fw = fw_objective(s.f, g_u, s.kernel.diag(u), lam_fw)
    if not f_sw < f_fw:
        return apply_fw_step(s, u, lam_fw, g_i=g_u, gap_before=gap_before)

    return apply_swap_step(s, u, v, lam_sw, g_u=g_u, g_v=g_v, curv=curv, gap_before=gap_before)


def apply_swap_step(s: SolverState, u: int, v: int, lam: float, *, g_u: float | None = None,
                    g_v: float | None = None, curv: float | None = None,
                    gap_before: float = math.nan) -> StepRecord:
    """alpha <- alpha + lam (e_u - e_v) with lam in [0, alpha_v]."""
    if not 0.0 <= lam <= s.alpha[v]:
        raise ValueError(f"swap step length {lam} outside [0, alpha_v={s.alpha[v]}]")
    if g_u is None:
        g_u = s.grad(u)
    if g_v is None:
        g_v = s.grad(v)
    if curv is None:
        curv = s.kernel.diag(u) - 2.0 * s.kernel.column(v)[u] + s.kernel.diag(v)
    drop = lam >= s.alpha[v]
    rec = StepRecord(SWAP, lam, u, gap_before, vertex_out=v, drop=drop)
    s.k += 1
    s.f = s.f + lam * (g_u - g_v) + 0.5 * lam * lam * curv
    if s.g is not None:
        s.g += lam * (s.kernel.column(u) - s.kernel.column(v))
    s.alpha[u] += lam
    s.alpha[v] = 0.0 if drop else s.alpha[v] - lam
    _prune(s)
    return rec


def numeric_line_search(phi: Callable[[float], float], lo: float, hi: float,
                        tol: float = 1e-12, max_iter: int = 500) -> float:
    """Golden-section minimizer of a unimodal ``phi`` on [lo, hi].

    Stops once the bracket is below ``tol`` relative to max(1, |a| + |b|);
    an endpoint is returned when it beats the interior estimate.
    """
    if not hi >= lo:
        raise ValueError("empty interval")
    invphi = (math.sqrt(5.0) - 1.0) / 2.0

    def ev(x):
        y = phi(x)
        if not math.isfinite(y):
            raise ValueError(f"non-finite objective at {x!r}")
        return y

    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = ev(c), ev(d)
    for _ in range(max_iter):
        if b - a <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = ev(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = ev(d)
    x = 0.5 * (a + b)
    best = min(((ev(x), x), (ev(lo), lo), (ev(hi), hi)), key=lambda t: t[0])
    return best[1]
