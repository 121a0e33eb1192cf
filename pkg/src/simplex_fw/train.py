"""Training runs, persisted models and evaluation."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import partan as pt
from . import solver as sv
from .data import Dataset, SparseExample
from .kernel import EffectiveKernel, KernelColumnCache, KernelParams, rbf
from .randomized import SamplerConfig, VertexSampler, sampled_vertex

log = logging.getLogger(__name__)

MODEL_VERSION = "simplex-fw/1"
VARIANTS = ("fw", "mfw", "swap", "partan")
STEP_RULES = ("line_search", "harmonic")
SAMPLINGS = ("full", "random")


@dataclass
class TrainConfig:
    variant: str = "fw"
    epsilon: float = 1e-4
    kernel: KernelParams | None = None
    step_rule: str = "line_search"
    sampling: str = "full"
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    max_iter: int = 10_000_000
    start_index: int = 0
    trace_every: int = 1
    drift_every: int = 1000
    check_invariants: bool = False
    cache_capacity: int | None = None

    def __post_init__(self):
        self.variant = self.variant.lower()
        self.step_rule = self.step_rule.replace("-", "_")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.step_rule not in STEP_RULES:
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if self.sampling not in SAMPLINGS:
            raise ValueError(f"unknown sampling mode {self.sampling!r}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.trace_every < 1:
            raise ValueError("trace_every must be at least 1")
        if self.step_rule == "harmonic" and self.variant != "fw":
            raise ValueError("the harmonic 2/(k+2) rule is only defined for plain FW")


@dataclass
class TracePoint:
    k: int
    f: float
    gap: float
    active: int
    elapsed_ms: float


class IterationTrace(list):
    """List of TracePoint with CSV export."""

    HEADER = "iter,f,gap,active,elapsed_ms"

    def to_csv(self) -> str:
        rows = [self.HEADER]
        rows += [f"{p.k},{p.f!r},{p.gap!r},{p.active},{p.elapsed_ms:.3f}" for p in self]
        return "\n".join(rows) + "\n"

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())


class InvariantViolation(AssertionError):
    pass


class InvariantMonitor:
    """Feasibility, descent and sparsity checks after every committed step."""

    def __init__(self, monotone: bool, start_support: int, raise_on_violation: bool = True):
        self.monotone = monotone
        self.start_support = start_support
        self.raise_on_violation = raise_on_violation
        self.violations: list[str] = []
        self.steps_checked = 0

    def _fail(self, msg: str) -> None:
        self.violations.append(msg)
        if self.raise_on_violation:
            raise InvariantViolation(msg)

    def check(self, s: sv.SolverState, f_before: float) -> None:
        self.steps_checked += 1
        a = s.alpha
        total = float(a.sum())
        if abs(total - 1.0) > 1e-9:
            self._fail(f"k={s.k}: sum(alpha) = {total!r}")
        if a.min() < 0.0:
            self._fail(f"k={s.k}: negative weight {a.min()!r}")
        if self.monotone and s.f > f_before + 1e-12 * max(1.0, abs(f_before)):
            self._fail(f"k={s.k}: objective rose {f_before!r} -> {s.f!r}")
        if np.count_nonzero(a) > s.k + self.start_support:
            self._fail(f"k={s.k}: support {np.count_nonzero(a)} exceeds k + |I0|")


@dataclass
class SolveResult:
    state: sv.SolverState
    trace: IterationTrace
    converged: bool
    iterations: int
    final_gap: float
    wall_time_ms: float
    steps: dict
    selected: list[int]
    monitor: InvariantMonitor | None = None


def solve(kernel, cfg: TrainConfig, *, record_selection: bool = False,
          force_mu_zero: bool = False, step_callback=None,
          monitor: InvariantMonitor | None = None) -> SolveResult:
    """Run the configured FW variant on any kernel object until the gap test passes.

    In full mode the stopping quantity is the duality gap 2f - min g. In
    random mode it is the sampled gap, and convergence is declared only when
    1 + safeguard_retries fresh samples in a row all satisfy it.
    """
    full = cfg.sampling == "full"
    s = sv.init_state(kernel, cfg.start_index, dense_gradient=full)
    sampler = None if full else VertexSampler(kernel.m, cfg.sampler)
    harmonic = cfg.step_rule == "harmonic"
    if monitor is None and cfg.check_invariants:
        monitor = InvariantMonitor(monotone=not harmonic, start_support=1)
    trace = IterationTrace()
    steps = {sv.FW: 0, sv.AWAY: 0, sv.SWAP: 0, sv.PARTAN: 0}
    selected: list[int] = []
    mem: pt.PartanMemory | None = None
    converged = False
    gap = math.nan
    t0 = time.perf_counter()

    def record(g):
        trace.append(TracePoint(s.k, s.f, g, int(np.count_nonzero(s.alpha)),
                                (time.perf_counter() - t0) * 1e3))

    while True:
        if full:
            i = sv.argmin_low(s.g)
            g_i = float(s.g[i])
            gap = 2.0 * s.f - float(s.g.min())
        else:
            i, g_i = sampled_vertex(s, sampler.draw())
            gap = 2.0 * s.f - g_i
            retries = cfg.sampler.safeguard_retries
            while gap <= cfg.epsilon and retries > 0:
                retries -= 1
                i, g_i = sampled_vertex(s, sampler.draw())
                gap = 2.0 * s.f - g_i

        stop = gap <= cfg.epsilon or s.k >= cfg.max_iter
        if s.k % cfg.trace_every == 0 or stop:
            record(gap)
        if gap <= cfg.epsilon:
            converged = True
            break
        if s.k >= cfg.max_iter:
            break
        if record_selection:
            selected.append(i)

        f_before = s.f
        try:
            rec = _step(s, cfg, i, g_i, gap, harmonic, mem, force_mu_zero)
        except sv.DegenerateStepError as exc:
            raise sv.DegenerateStepError(f"iteration {s.k}: {exc}") from exc
        if isinstance(rec, tuple):
            rec, mem = rec
        steps[rec.kind] += 1
        if monitor is not None:
            monitor.check(s, f_before)
        if step_callback is not None:
            step_callback(s, mem, rec)
        if cfg.drift_every and s.k % cfg.drift_every == 0:
            s.repair()
            if mem is not None:
                pt.repair_memory(mem, s)

    elapsed = (time.perf_counter() - t0) * 1e3
    return SolveResult(s, trace, converged, s.k, gap, elapsed, steps, selected, monitor)


def _step(s, cfg, i, g_i, gap, harmonic, mem, force_mu_zero):
    variant = cfg.variant
    if variant == "fw":
        lam = 2.0 / (s.k + 2.0) if harmonic else sv.fw_line_search(s, i, g_i)
        return sv.apply_fw_step(s, i, lam, g_i=g_i, gap_before=gap)

    if variant == "partan":
        if mem is None:
            alpha0, g0, f0 = s.alpha.copy(), None if s.g is None else s.g.copy(), s.f
            lam = sv.fw_line_search(s, i, g_i)
            rec = sv.apply_fw_step(s, i, lam, g_i=g_i, gap_before=gap)
            return rec, pt.start_memory(alpha0, g0, f0, s)
        rec = pt.partan_iteration(s, mem, i, g_i=g_i, gap_before=gap, force_mu_zero=force_mu_zero)
        return rec, mem

    v = sv.select_away_vertex(s)
    g_v = float(s.grad(v))
    if variant == "mfw":
        # away direction wins when g'd_A <= g'd_FW
        if 2.0 * s.f - g_v <= g_i - 2.0 * s.f and s.alpha[v] < 1.0:
            return sv.away_step(s, v, g_v=g_v, gap_before=gap)
        return sv.apply_fw_step(s, i, sv.fw_line_search(s, i, g_i), g_i=g_i, gap_before=gap)
    return sv.swap_step(s, i, v, g_u=g_i, g_v=g_v, gap_before=gap)


@dataclass
class SupportVector:
    index: int
    alpha: float
    label: int
    features: SparseExample


@dataclass
class TrainedModel:
    support: list[SupportVector]
    kernel: KernelParams
    final_f: float
    final_gap: float
    iterations: int
    wall_time_ms: float
    converged: bool
    variant: str = "fw"

    def to_json(self) -> dict:
        return {
            "version": MODEL_VERSION,
            "kernel": asdict(self.kernel),
            "support": [{"index": sv_.index, "y": sv_.label, "alpha": sv_.alpha,
                         "features": [[i, v] for i, v in zip(sv_.features.indices, sv_.features.values)]}
                        for sv_ in self.support],
            "meta": {"iterations": self.iterations, "final_gap": self.final_gap,
                     "final_f": self.final_f, "converged": self.converged,
                     "wall_time_ms": self.wall_time_ms, "variant": self.variant},
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def from_json(cls, obj: dict) -> "TrainedModel":
        if obj.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {obj.get('version')!r}")
        try:
            kernel = KernelParams(**obj["kernel"])
            support = []
            for rec in obj["support"]:
                feats = rec["features"]
                ex = SparseExample(int(rec["y"]), tuple(int(i) for i, _ in feats),
                                   tuple(float(v) for _, v in feats))
                support.append(SupportVector(int(rec.get("index", -1)), float(rec["alpha"]),
                                             int(rec["y"]), ex))
            meta = obj["meta"]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed model file: {exc}") from exc
        if not support:
            raise ValueError("model has no support vectors")
        return cls(support, kernel, float(meta.get("final_f", math.nan)),
                   float(meta["final_gap"]), int(meta["iterations"]),
                   float(meta.get("wall_time_ms", 0.0)), bool(meta["converged"]),
                   meta.get("variant", "fw"))

    @classmethod
    def load(cls, path) -> "TrainedModel":
        return cls.from_json(json.loads(Path(path).read_text()))

    @property
    def n_support(self) -> int:
        return len(self.support)


def build_model(data: Dataset, result: SolveResult, params: KernelParams, variant: str) -> TrainedModel:
    s = result.state
    support = [SupportVector(int(j), float(s.alpha[j]), data.examples[j].label, data.examples[j])
               for j in np.flatnonzero(s.alpha)]
    return TrainedModel(support, params, s.f, result.final_gap, result.iterations,
                        result.wall_time_ms, result.converged, variant)


def make_kernel(data: Dataset, cfg: TrainConfig) -> EffectiveKernel:
    if cfg.kernel is None:
        raise ValueError("TrainConfig.kernel must be set (resolve gamma first)")
    cache = KernelColumnCache(cfg.cache_capacity) if cfg.cache_capacity else None
    return EffectiveKernel(data, cfg.kernel, cache)


def train(data: Dataset, cfg: TrainConfig, **solve_kwargs) -> tuple[TrainedModel, IterationTrace]:
    result = solve(make_kernel(data, cfg), cfg, **solve_kwargs)
    if not result.converged:
        log.warning("%s stopped at max_iter=%d with gap %.3e", cfg.variant, cfg.max_iter,
                    result.final_gap)
    return build_model(data, result, cfg.kernel, cfg.variant), result.trace


def predict(model: TrainedModel, x: SparseExample) -> tuple[int, float]:
    """(label, decision value) with decision = sum_i a_i y_i (k(x, x_i) + b)."""
    b = model.kernel.bias_term
    dec = 0.0
    for s_ in model.support:
        dec += s_.alpha * s_.label * (rbf(x, s_.features, model.kernel.gamma) + b)
    return (1 if dec >= 0.0 else -1), dec


def _support_matrix(model: TrainedModel, n: int) -> sp.csr_matrix:
    rows = Dataset([s_.features for s_ in model.support], n=n)
    return rows.to_csr()


def decision_function(model: TrainedModel, data: Dataset, chunk: int = 2048) -> np.ndarray:
    """Vectorised decision values for every example of ``data``."""
    n = max(data.n, max((s_.features.indices[-1] for s_ in model.support if s_.features.indices),
                        default=0))
    SV = _support_matrix(model, n)
    X = data.to_csr()
    if X.shape[1] < n:
        X = sp.csr_matrix((X.data, X.indices, X.indptr), shape=(X.shape[0], n))
    coef = np.array([s_.alpha * s_.label for s_ in model.support])
    sv_sq = np.asarray(SV.multiply(SV).sum(axis=1)).ravel()
    x_sq = np.asarray(X.multiply(X).sum(axis=1)).ravel()
    out = np.empty(data.m)
    b = model.kernel.bias_term
    for start in range(0, data.m, chunk):
        stop = min(start + chunk, data.m)
        dots = (X[start:stop] @ SV.T).toarray()
        d2 = np.maximum(x_sq[start:stop, None] + sv_sq[None, :] - 2.0 * dots, 0.0)
        out[start:stop] = (np.exp(-model.kernel.gamma * d2) + b) @ coef
    return out


def predict_labels(model: TrainedModel, data: Dataset) -> np.ndarray:
    return np.where(decision_function(model, data) >= 0.0, 1, -1)


def accuracy(model: TrainedModel, test: Dataset) -> float:
    if test.m == 0:
        raise ValueError("empty test set")
    return float(np.mean(predict_labels(model, test) == test.labels))


def select_C(data: Dataset, gamma: float, candidates, *, add_bias: bool = True, seed: int = 0,
             fraction: float = 0.7, epsilon: float = 1e-3, variant: str = "partan") -> KernelParams:
    """Pick C by accuracy on a single random validation split; ties go to the first candidate."""
    from .data import split_train_validation

    fit, held_out = split_train_validation(data, fraction, seed)
    best = None
    for C in candidates:
        params = KernelParams(gamma, float(C), add_bias)
        model, _ = train(fit, TrainConfig(variant, epsilon, params, trace_every=10**9))
        acc = accuracy(model, held_out)
        log.info("C=%g validation accuracy %.4f", C, acc)
        if best is None or acc > best[0]:
            best = (acc, params)
    return best[1]
