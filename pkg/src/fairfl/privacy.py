"""Gaussian mechanism, contribution-weighted noise scaling, and privacy accounting."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class PrivacyParams:
    epsilon: float
    delta: float

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")


def min_sigma(p: PrivacyParams) -> float:
    """Smallest Gaussian noise multiplier giving (epsilon, delta)-DP: sqrt(2 ln(1.25/delta)) / epsilon."""
    return math.sqrt(2.0 * math.log(1.25 / p.delta)) / p.epsilon


def adaptive_sigma(p: PrivacyParams, deviation: float, theta: float) -> float:
    """Noise multiplier for a device whose update deviates by ``deviation`` in [0, 1].

    The effective budget shrinks to ``epsilon (1 - deviation * theta)``, so the
    best-aligned device (deviation 0) gets exactly :func:`min_sigma`.
    """
    if not 0 <= theta <= 1:
        raise ValueError("theta must lie in [0, 1]")
    if not 0 <= deviation <= 1:
        raise ValueError("deviation factor must lie in [0, 1]")
    shrink = 1.0 - deviation * theta
    if shrink <= 0:
        raise ValueError("deviation * theta must be < 1")
    return math.sqrt(2.0 * math.log(1.25 / p.delta)) / (p.epsilon * shrink)


def gaussian_perturb(v, sensitivity: float, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """``v + N(0, (sensitivity * sigma)^2 I)``; nothing is drawn when the scale is zero."""
    if sigma < 0 or sensitivity < 0:
        raise ValueError("sigma and sensitivity must be non-negative")
    v = np.asarray(v, dtype=float)
    scale = sensitivity * sigma
    if scale == 0:
        return v.copy()
    return v + rng.normal(0.0, scale, size=v.shape)


def clip_to_sensitivity(h, clip: float) -> tuple[np.ndarray, float]:
    """Rescale ``h`` onto the L2 ball of radius ``clip``; the sensitivity is then ``clip``."""
    if not clip > 0:
        raise ValueError("clip norm must be positive")
    h = np.asarray(h, dtype=float)
    norm = float(np.linalg.norm(h))
    if norm > clip:
        h = h * (clip / norm)
    return h, clip


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between ``a`` and ``b``; 0 when either vector is (numerically) zero."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na <= 1e-15 or nb <= 1e-15:
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def deviation_factors(w_g, updates: Sequence) -> np.ndarray:
    """``1 - sim_k / max sim`` clamped to [0, 1]; all zeros when no similarity is positive."""
    if len(updates) == 0:
        raise ValueError("need at least one update")
    sims = np.array([cosine_similarity(w_g, h) for h in updates])
    best = sims.max()
    if best <= 0:
        return np.zeros_like(sims)
    dev = np.clip(1.0 - sims / best, 0.0, 1.0)
    dev[int(np.argmax(sims))] = 0.0
    return dev


def compose_basic(rounds: int, p: PrivacyParams) -> tuple[float, float]:
    if rounds < 0:
        raise ValueError("round count must be non-negative")
    return rounds * p.epsilon, rounds * p.delta


def compose_strong(rounds: int, p: PrivacyParams) -> tuple[float, float]:
    """``(epsilon sqrt(M ln(1/delta)), M delta)``."""
    if rounds < 1:
        raise ValueError("strong composition needs at least one round")
    return p.epsilon * math.sqrt(rounds * math.log(1.0 / p.delta)), rounds * p.delta


@dataclass
class PrivacyLedger:
    """Per-entity running privacy loss; totals are recomputed from the round count."""

    params: PrivacyParams
    rounds: int = 0

    def record_round(self) -> None:
        self.rounds += 1

    @property
    def basic(self) -> tuple[float, float]:
        return compose_basic(self.rounds, self.params)

    @property
    def strong(self) -> tuple[float, float]:
        return compose_strong(self.rounds, self.params) if self.rounds else (0.0, 0.0)
