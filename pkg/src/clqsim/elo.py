"""Advance-probability kernel.

A tie is a single Bernoulli event: team i advances against team j with
probability 1 / (1 + 10^(-d/s)) in a one-leg match and
1 / (1 + 10^(-sqrt(2) d/s)) over a two-legged home-and-away tie, where
d = elo_i - elo_j and s is the scaling parameter (default 400).  The sqrt(2)
factor sharpens two-leg outcomes; raising s flattens both toward 0.5.

Ratings are static for a whole qualifying campaign; there is no home
advantage term and no Elo updating after simulated matches.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class ScalingParam:
    """The logistic spread parameter s of the advance-probability curves."""

    s: float = 400.0

    def __post_init__(self) -> None:
        if not self.s > 0:
            raise ValueError(f"scaling parameter must be positive, got {self.s}")


def _as_scale(s: "ScalingParam | float") -> float:
    value = s.s if isinstance(s, ScalingParam) else float(s)
    if not value > 0:
        raise ValueError(f"scaling parameter must be positive, got {s}")
    return value


def win_prob_one_leg(elo_i: float, elo_j: float, s: "ScalingParam | float" = 400.0) -> float:
    """Probability that team i beats team j in a single match."""
    scale = _as_scale(s)
    d = float(elo_i) - float(elo_j)
    return 1.0 / (1.0 + 10.0 ** (-d / scale))


def win_prob_two_leg(elo_i: float, elo_j: float, s: "ScalingParam | float" = 400.0) -> float:
    """Probability that team i advances against team j over two legs."""
    scale = _as_scale(s)
    d = float(elo_i) - float(elo_j)
    return 1.0 / (1.0 + 10.0 ** (-_SQRT2 * d / scale))


def pair_probabilities(
    elo: np.ndarray,
    i_idx: np.ndarray,
    j_idx: np.ndarray,
    s: "ScalingParam | float" = 400.0,
    sharpen: bool = True,
) -> np.ndarray:
    """Vectorized advance probabilities for many (i, j) pairs at once.

    ``elo`` has one row per draw and one column per team; ``i_idx``/``j_idx``
    select the pair columns.  Returns P(i advances) with the same leading
    shape as ``elo``.  Strength ratios are computed relative to the row
    maximum so realistic ratings never underflow; any pair that still does
    (astronomically mismatched synthetic inputs) falls back to the direct
    formula.
    """
    scale = _as_scale(s)
    factor = _SQRT2 if sharpen else 1.0
    elo = np.asarray(elo, dtype=np.float64)
    ref = elo.max(axis=-1, keepdims=True)
    strength = np.power(10.0, factor * (elo - ref) / scale)
    si = strength[..., i_idx]
    sj = strength[..., j_idx]
    with np.errstate(invalid="ignore"):
        p = si / (si + sj)
    bad = ~np.isfinite(p)
    if bad.any():
        d = elo[..., i_idx] - elo[..., j_idx]
        p = np.where(bad, 1.0 / (1.0 + np.power(10.0, -factor * d / scale)), p)
    return p
