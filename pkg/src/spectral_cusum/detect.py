"""CUSUM increments, recursions, and the online detection loop.

Three detector variants share one recursion S_t = max(S_{t-1}, 0) + z_t with
S_0 = 0 and alarm at the first t with S_t >= b. They differ in the increment:

- exact: z_t = 2 tr(G_t AA^T) - tr((AA^T)^2), using the true indicator matrix
  (the oracle baseline; equals 2 sigma^2 times the Gaussian log-likelihood
  ratio, so it needs no noise-level input and stays defined at sigma = 0);
- spectral: z_t = tr(G_t P_t) - d, where P_t projects onto the top-m
  eigenspace of the mean of the w snapshots after t;
- top1: z_t = v_t^T G_t v_t - d with v_t the leading eigenvector of that mean.

Spectral and top1 score snapshot t only once snapshot t+w has arrived, so the
window never overlaps the scored snapshot and the wall-clock alarm time is the
scored index plus w.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from itertools import islice
from typing import Iterable

import numpy as np

from .graph_model import GraphSnapshot, IndicatorMatrix, mean_matrix
from .spectral import WindowBuffer, estimate_subspace, projector

EXACT = "exact"
SPECTRAL = "spectral"
TOP1 = "top1"
METHODS = (EXACT, SPECTRAL, TOP1)


def _as_weights(g) -> np.ndarray:
    return g.weights if isinstance(g, GraphSnapshot) else np.asarray(g, dtype=float)


def _trace_with_symmetric(x: np.ndarray, sym: np.ndarray) -> float:
    # tr(X @ S) for symmetric S equals the entrywise dot, X need not be symmetric
    return float(np.dot(x.ravel(), sym.ravel()))


def log_likelihood_ratio(g, a: IndicatorMatrix, sigma: float) -> float:
    """Gaussian log-likelihood ratio of post- vs pre-change for one snapshot."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return exact_increment(g, a) / (2.0 * sigma * sigma)


def exact_increment(g, a: IndicatorMatrix) -> float:
    """Scaled likelihood increment 2 tr(G AA^T) - tr((AA^T)^2).

    Equals 2 sigma^2 times log_likelihood_ratio; being sigma-free it is the
    form the exact detector accumulates.
    """
    mm = mean_matrix(a)
    w = _as_weights(g)
    return 2.0 * _trace_with_symmetric(w, mm) - _trace_with_symmetric(mm, mm)


def spectral_increment(g, p: np.ndarray, d: float) -> float:
    """Projection energy of one snapshot on the estimated subspace, minus drift."""
    return _trace_with_symmetric(_as_weights(g), np.asarray(p, dtype=float)) - d


def top1_increment(g, v: np.ndarray, d: float) -> float:
    """Quadratic form of one snapshot along the leading eigenvector, minus drift."""
    v = np.asarray(v, dtype=float)
    w = _as_weights(g)
    return float(v @ w @ v) - d


def cusum_update(prev: float, increment: float) -> float:
    """One step of the clamped recursion: max(prev, 0) + increment."""
    return max(prev, 0.0) + increment


def cusum_maxform(increments: Iterable[float]) -> list[float]:
    """Brute-force max-form statistic: S_t = max over k <= t of sum(z_k..z_t).

    Computed by scanning all candidate change points, independently of the
    recursion, so it can serve as an oracle for the recursive form.
    """
    incs = [float(z) for z in increments]
    stats = []
    for t in range(1, len(incs) + 1):
        best = -math.inf
        acc = 0.0
        for k in range(t - 1, -1, -1):
            acc += incs[k]
            if acc > best:
                best = acc
        stats.append(best)
    return stats


@dataclass(frozen=True)
class DetectorConfig:
    """Configuration of one detector run.

    b is the alarm threshold (statistic >= b stops the run). The spectral and
    top1 methods need a window length w and a drift d; d defaults to m/2, the
    midpoint of the admissible interval (0, m). The exact method needs the
    true indicator matrix A; sigma is carried only for likelihood reporting.
    """

    method: str
    b: float
    m: int | None = None
    w: int | None = None
    d: float | None = None
    sigma: float | None = None
    A: IndicatorMatrix | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not self.b > 0:
            raise ValueError("threshold b must be positive")
        if self.method == EXACT:
            if self.A is None:
                raise ValueError("exact method requires the indicator matrix A")
            return
        if self.method == TOP1:
            object.__setattr__(self, "m", 1)
        if self.m is None or self.m < 1:
            raise ValueError("spectral method requires m >= 1")
        if self.w is None or self.w < 1:
            raise ValueError(f"{self.method} method requires a window length w >= 1")
        if self.d is None:
            object.__setattr__(self, "d", self.m / 2.0)
        if not self.d > 0:
            raise ValueError("drift d must be positive")


@dataclass
class DetectorState:
    """Mutable state of an in-progress detector run."""

    statistic: float = 0.0
    time: int = 0
    pending: WindowBuffer | None = None
    stopped: bool = False
    stop_time: int | None = None


@dataclass(frozen=True)
class DetectionResult:
    """Outcome of one run: wall-clock stop time (None if no alarm within the
    data), the trajectory of (scored index, statistic) pairs, and the config."""

    stop_time: int | None
    trajectory: list[tuple[int, float]]
    config: DetectorConfig


def run_detector(stream, config: DetectorConfig, horizon: int | None = None) -> DetectionResult:
    """Run one detector over a snapshot stream until alarm or exhaustion.

    The stream may be any iterable of snapshots; at most `horizon` snapshots
    are consumed when given. Spectral/top1 runs shorter than w+1 snapshots
    score nothing and return an empty trajectory with no alarm.
    """
    if horizon is not None and horizon < 1:
        raise ValueError("horizon must be at least 1")
    if config.method in (SPECTRAL, TOP1) and horizon is not None and horizon <= config.w:
        raise ValueError(f"horizon must exceed the window length w={config.w}")
    snaps = stream if horizon is None else islice(stream, horizon)
    if config.method == EXACT:
        return _run_exact(snaps, config)
    return _run_windowed(snaps, config)


def _run_exact(snaps, config: DetectorConfig) -> DetectionResult:
    mm = mean_matrix(config.A)
    mm_flat = mm.ravel()
    offset = _trace_with_symmetric(mm, mm)
    state = DetectorState()
    trajectory: list[tuple[int, float]] = []
    for snap in snaps:
        inc = 2.0 * float(np.dot(snap.weights.ravel(), mm_flat)) - offset
        state.statistic = cusum_update(state.statistic, inc)
        state.time = snap.t
        trajectory.append((snap.t, state.statistic))
        if state.statistic >= config.b:
            state.stopped = True
            state.stop_time = snap.t
            break
    return DetectionResult(stop_time=state.stop_time, trajectory=trajectory, config=config)


def _run_windowed(snaps, config: DetectorConfig) -> DetectionResult:
    w = config.w
    state = DetectorState(pending=WindowBuffer(w))
    held: deque[GraphSnapshot] = deque()
    trajectory: list[tuple[int, float]] = []
    for snap in snaps:
        held.append(snap)
        state.pending.push(snap)
        if not state.pending.full or len(held) < w + 1:
            continue
        g = held.popleft()
        est = estimate_subspace(state.pending, config.m)
        if config.method == TOP1:
            inc = top1_increment(g, est.eigenvectors[:, 0], config.d)
        else:
            inc = spectral_increment(g, projector(est), config.d)
        state.statistic = cusum_update(state.statistic, inc)
        state.time = g.t
        trajectory.append((g.t, state.statistic))
        if state.statistic >= config.b:
            state.stopped = True
            state.stop_time = g.t + w
            break
    return DetectionResult(stop_time=state.stop_time, trajectory=trajectory, config=config)
