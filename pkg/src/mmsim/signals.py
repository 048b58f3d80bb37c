"""Trend-signal providers: a noisy lookahead oracle and a causal momentum
baseline.

The oracle labels each step with the sign of the midprice move over a fixed
horizon, thresholded in ticks, and optionally corrupted: with probability
``noise`` the label is resampled uniformly from the other two classes.  It
stands in for pretrained predictors so signal quality is a controlled knob.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import HorizonOutOfRange, WindowOutOfRange

ORACLE = "oracle"
MOMENTUM = "momentum"

DEFAULT_HORIZONS = (20, 120, 240, 600)


@dataclass(frozen=True)
class SignalSpec:
    horizons: tuple = DEFAULT_HORIZONS
    threshold: float = 1.0  # ticks
    noise: float = 0.0  # label corruption probability, in [0, 1]
    kind: str = ORACLE

    def __post_init__(self):
        if any(h <= 0 for h in self.horizons):
            raise ValueError("horizons must be positive")
        if any(a >= b for a, b in zip(self.horizons, self.horizons[1:])):
            raise ValueError("horizons must be strictly increasing")
        if not 0.0 <= self.noise <= 1.0:
            raise ValueError("noise must be in [0, 1]")


def _corrupt(labels: np.ndarray, eps: float, rng: np.random.Generator) -> np.ndarray:
    if eps <= 0.0:
        return labels
    flip = rng.random(labels.shape) < eps
    # index shift by 1 or 2 mod 3 lands uniformly on the other two classes
    shift = rng.integers(1, 3, size=labels.shape)
    corrupted = ((labels + 1 + shift) % 3 - 1).astype(np.int8)
    return np.where(flip, corrupted, labels)


def oracle_signal(data: Dataset, t: int, h: int, theta: float = 1.0,
                  eps: float = 0.0, rng: np.random.Generator | None = None) -> int:
    """Sign of the mid move over ``h`` steps, thresholded by ``theta`` ticks."""
    if t + h >= len(data) or t < 0:
        raise HorizonOutOfRange(f"t={t}, h={h}, n={len(data)}")
    move = int(data.mid[t + h]) - int(data.mid[t])
    label = 0
    if abs(move) > 2 * theta:  # threshold in half-ticks
        label = 1 if move > 0 else -1
    if eps > 0.0:
        if rng is None:
            raise ValueError("noisy oracle needs an rng")
        return int(_corrupt(np.array([label], dtype=np.int8), eps, rng)[0])
    return label


def momentum_signal(data: Dataset, t: int, w: int, theta: float = 1.0) -> int:
    """Sign of the trailing ``w``-step mid move; never reads past ``t``."""
    if t < w:
        raise WindowOutOfRange(f"t={t} < window {w}")
    if t >= len(data):
        raise WindowOutOfRange(f"t={t} outside dataset")
    move = int(data.mid[t]) - int(data.mid[t - w])
    if abs(move) > 2 * theta:
        return 1 if move > 0 else -1
    return 0


class LookaheadOracle:
    """Episode label table built from future mids (plus optional noise)."""

    def __init__(self, spec: SignalSpec):
        self.spec = spec

    @property
    def future_margin(self) -> int:
        return max(self.spec.horizons)

    def episode_labels(self, data: Dataset, start: int, steps: int,
                       rng: np.random.Generator) -> np.ndarray:
        """Labels for dataset indices start .. start+steps, shape (steps+1, H)."""
        n = steps + 1
        if start + steps + self.future_margin >= len(data):
            raise HorizonOutOfRange(
                f"start {start} + {steps} steps + horizon {self.future_margin} "
                f"exceeds dataset of {len(data)}"
            )
        mid = data.mid
        theta2 = 2 * self.spec.threshold
        out = np.zeros((n, len(self.spec.horizons)), dtype=np.int8)
        base = mid[start:start + n]
        for k, h in enumerate(self.spec.horizons):
            move = mid[start + h:start + n + h] - base
            out[:, k] = np.sign(move) * (np.abs(move) > theta2)
        return _corrupt(out, self.spec.noise, rng)


class MomentumProvider:
    """Causal provider: trailing-window mid move, zero inside the warmup."""

    def __init__(self, spec: SignalSpec):
        self.spec = spec

    @property
    def future_margin(self) -> int:
        return 0

    def episode_labels(self, data: Dataset, start: int, steps: int,
                       rng: np.random.Generator) -> np.ndarray:
        n = steps + 1
        if start + steps >= len(data):
            raise WindowOutOfRange(f"start {start} + {steps} exceeds dataset")
        mid = data.mid
        theta2 = 2 * self.spec.threshold
        idx = start + np.arange(n)
        out = np.zeros((n, len(self.spec.horizons)), dtype=np.int8)
        for k, w in enumerate(self.spec.horizons):
            past = np.maximum(idx - w, 0)
            move = mid[idx] - mid[past]
            labels = np.sign(move) * (np.abs(move) > theta2)
            labels[idx - w < 0] = 0
            out[:, k] = labels
        return out


def make_provider(spec: SignalSpec):
    if spec.kind == ORACLE:
        return LookaheadOracle(spec)
    if spec.kind == MOMENTUM:
        return MomentumProvider(spec)
    raise ValueError(f"unknown signal kind {spec.kind!r}")
