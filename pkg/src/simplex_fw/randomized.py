"""Vertex selection over a random coordinate sample.

Only gradient entries on the sample (and the support, for away vertices) are
ever formed, each as a sum over the current support.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .solver import SolverState, argmin_low, gradient_on_demand

log = logging.getLogger(__name__)

DEFAULT_SAMPLE_SIZE = 194


@dataclass(frozen=True)
class SamplerConfig:
    sample_size: int = DEFAULT_SAMPLE_SIZE
    seed: int = 0
    safeguard_retries: int = 1

    def __post_init__(self):
        if self.sample_size < 1:
            raise ValueError("sample_size must be at least 1")
        if self.safeguard_retries < 0:
            raise ValueError("safeguard_retries must be non-negative")


def miss_probability(sample_size: int, top_fraction: float = 0.02) -> float:
    """Chance that a uniform sample misses the best ``top_fraction`` of coordinates."""
    return (1.0 - top_fraction) ** sample_size


def draw_sample(m: int, cfg: SamplerConfig, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample without replacement, returned in ascending order."""
    size = cfg.sample_size
    if size > m:
        log.warning("sample size %d exceeds m=%d; using all coordinates", size, m)
        size = m
    return np.sort(rng.choice(m, size=size, replace=False))


class VertexSampler:
    """Seeded sample stream for one run; safeguard resamples share it."""

    def __init__(self, m: int, cfg: SamplerConfig):
        self.m = m
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.draws = 0
        if cfg.sample_size > m:
            log.warning("sample size %d exceeds m=%d; using all coordinates", cfg.sample_size, m)
            self.cfg = SamplerConfig(m, cfg.seed, cfg.safeguard_retries)

    def draw(self) -> np.ndarray:
        self.draws += 1
        return draw_sample(self.m, self.cfg, self.rng)


def gradient_entry_on_demand(i: int, s: SolverState) -> float:
    """(K alpha)_i without the dense gradient, O(|support|)."""
    return gradient_on_demand(s.kernel, s.alpha, i)


def sampled_vertex(s: SolverState, S: np.ndarray) -> tuple[int, float]:
    """(argmin over S of the gradient, its value); ties go to the lowest index."""
    S = np.sort(np.asarray(S))
    if S.size == 0:
        raise ValueError("empty sample")
    gs = s.grad(S)
    pos = argmin_low(gs)
    return int(S[pos]), float(gs[pos])


def select_vertex_sampled(s: SolverState, S) -> int:
    return sampled_vertex(s, S)[0]


def sampled_gap(s: SolverState, i_S: int, g_i: float | None = None) -> float:
    """2f - g_{i_S}; never exceeds the full duality gap."""
    if g_i is None:
        g_i = s.grad(i_S)
    return 2.0 * s.f - g_i
