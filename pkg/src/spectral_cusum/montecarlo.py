"""Monte Carlo estimation of run lengths and delays, threshold calibration,
operating-characteristic curves, and empirical checks of the design formulas.

Determinism contract: replication i of a plan draws from a generator that is
a pure function of (master seed, i), estimates are reduced in replication
order, and worker processes only change who computes a replication, never
what it draws. Identical plans therefore give bit-identical estimates at any
worker count.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .detect import EXACT, SPECTRAL, TOP1, DetectorConfig, run_detector
from .graph_model import (
    SYMMETRIC,
    StreamScenario,
    build_indicator,
    iter_stream,
    mean_matrix,
    rng_from_key,
)
from .spectral import WindowBuffer, estimate_subspace, projector
from .theory import ValidityError, drift_for_delta

_CHUNK = 512
_EQUALIZER_CHUNK = 2048


@dataclass(frozen=True)
class McPlan:
    """One Monte Carlo experiment: a scenario template, a detector, and a budget.

    The scenario's own seed is a template field: replication i draws from the
    generator keyed by (master_seed, i) instead. cap bounds the steps of one
    replication; runs that reach it without alarming are reported as truncated,
    never averaged in as if they had alarmed at cap.
    """

    scenario: StreamScenario
    detector: DetectorConfig
    replications: int
    cap: int
    master_seed: int = 0

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("need at least one replication")
        if self.cap < 1:
            raise ValueError("cap must be at least 1")
        if self.detector.method in (SPECTRAL, TOP1) and self.cap <= self.detector.w:
            raise ValueError("cap must exceed the window length")


@dataclass(frozen=True)
class McEstimate:
    """Sample mean and standard error over the replications that alarmed."""

    mean: float
    se: float
    used: int
    truncated: int


class CalibrationError(RuntimeError):
    """Threshold calibration could not reach the target run length."""


def _summarize(times: list[int | None]) -> McEstimate:
    alarmed = np.array([t for t in times if t is not None], dtype=float)
    truncated = len(times) - alarmed.size
    if alarmed.size == 0:
        return McEstimate(mean=math.nan, se=math.nan, used=0, truncated=truncated)
    se = float(alarmed.std(ddof=1) / math.sqrt(alarmed.size)) if alarmed.size > 1 else 0.0
    return McEstimate(mean=float(alarmed.mean()), se=se, used=int(alarmed.size), truncated=truncated)


# -- per-replication engines -------------------------------------------------


def _exact_coefficients(plan: McPlan):
    """Precompute the per-step increment law of the exact detector.

    Under either sampling convention the increment is a linear map of the
    step's Gaussian draws: z_t = 2 (base_t + sigma * (draws . coef)) - offset,
    where base_t is 0 pre-change and tr((AA^T)^2) post-change.
    """
    a = build_indicator(plan.scenario.assignment)
    mm = mean_matrix(a)
    n = mm.shape[0]
    offset = float(np.dot(mm.ravel(), mm.ravel()))
    if plan.scenario.convention == SYMMETRIC:
        iu = np.triu_indices(n)
        coef = mm[iu] * np.where(iu[0] == iu[1], 1.0, 2.0)
    else:
        coef = mm.ravel().copy()
    return coef, offset


def _exact_statistics(plan: McPlan, rep: int, b: float) -> tuple[int | None, np.ndarray | None]:
    """Alarm time of one exact-method replication, or its full statistic path.

    With a finite b the replication stops early at the alarm and returns
    (wall-clock time, None); with b = +inf it runs to cap and returns
    (None, statistics array) for threshold-independent caching.
    """
    coef, offset = _exact_coefficients(plan)
    sigma = plan.scenario.sigma
    tau = plan.scenario.tau
    rng = rng_from_key(plan.master_seed, rep)
    cap = plan.cap
    keep = not math.isfinite(b)
    kept: list[np.ndarray] = []
    carry = 0.0
    pos = 0
    while pos < cap:
        k = min(_CHUNK, cap - pos)
        draws = rng.standard_normal((k, coef.size))
        if tau is None:
            base = 0.0
        else:
            t_idx = np.arange(pos + 1, pos + k + 1)
            base = np.where(t_idx > tau, offset, 0.0)
        incs = 2.0 * (base + sigma * (draws @ coef)) - offset
        stats = _lindley(incs, carry)
        if keep:
            kept.append(stats)
        else:
            hit = np.nonzero(stats >= b)[0]
            if hit.size:
                return pos + int(hit[0]) + 1, None
        carry = float(stats[-1])
        pos += k
    if keep:
        return None, np.concatenate(kept)
    return None, None


def _lindley(increments: np.ndarray, s0: float) -> np.ndarray:
    """Clamped-recursion statistics for a block of increments, starting at s0.

    Uses S_t = C_t + max(s0, -min_{j<t} C_j) with C the running increment sum,
    which equals the per-step recursion max(S_{t-1}, 0) + z_t.
    """
    c = np.cumsum(increments)
    prefix = np.concatenate(([0.0], c[:-1]))
    return c + np.maximum(-np.minimum.accumulate(prefix), s0)


def _generic_result(plan: McPlan, rep: int, b: float):
    rng = rng_from_key(plan.master_seed, rep)
    detector = replace(plan.detector, b=b)
    stream = iter_stream(plan.scenario, rng=rng, horizon=plan.cap)
    return run_detector(stream, detector, horizon=plan.cap)


def _rep_alarm(plan: McPlan, rep: int, b: float | None = None) -> int | None:
    """Wall-clock alarm time of one replication (None if it hit the cap)."""
    bb = plan.detector.b if b is None else b
    if plan.detector.method == EXACT:
        alarm, _ = _exact_statistics(plan, rep, bb)
        return alarm
    return _generic_result(plan, rep, bb).stop_time


def _rep_runmax(plan: McPlan, rep: int) -> np.ndarray:
    """Running maximum of one replication's statistic path (b-independent)."""
    if plan.detector.method == EXACT:
        _, stats = _exact_statistics(plan, rep, math.inf)
        return np.maximum.accumulate(stats)
    result = _generic_result(plan, rep, math.inf)
    stats = np.array([s for _, s in result.trajectory])
    return np.maximum.accumulate(stats)


def _rep_alarm_star(args):
    plan, rep = args
    return _rep_alarm(plan, rep)


def _rep_runmax_star(args):
    plan, rep = args
    return _rep_runmax(plan, rep)


def _map_reps(fn_star, plan: McPlan, reps: range, workers: int) -> list:
    if workers <= 1:
        return [fn_star((plan, i)) for i in reps]
    args = [(plan, i) for i in reps]
    chunksize = max(1, len(args) // (workers * 8))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn_star, args, chunksize=chunksize))


# -- estimates ----------------------------------------------------------------


def estimate_arl(plan: McPlan, workers: int = 1) -> McEstimate:
    """Average run length: mean wall-clock alarm time with no change ever."""
    if plan.scenario.tau is not None:
        raise ValueError("ARL estimation needs a scenario with tau=None (no change)")
    times = _map_reps(_rep_alarm_star, plan, range(plan.replications), workers)
    return _summarize(times)


def estimate_edd(plan: McPlan, workers: int = 1) -> McEstimate:
    """Expected detection delay: mean wall-clock alarm time with the change at
    the start (the standard worst-case surrogate for this statistic)."""
    if plan.scenario.tau != 0:
        raise ValueError("EDD estimation needs a scenario with tau=0 (immediate change)")
    times = _map_reps(_rep_alarm_star, plan, range(plan.replications), workers)
    return _summarize(times)


def calibrate_threshold(
    plan: McPlan, target_gamma: float, rel_tol: float = 0.1, workers: int = 1
) -> float:
    """Find the threshold whose average run length matches target_gamma.

    Bisects on the empirically monotone ARL(b), warm-started at ln(gamma);
    the warm start is returned untouched when it already probes within
    rel_tol. Probes reuse per-replication statistic paths computed once (the
    path does not depend on b), counting capped runs at cap, which keeps the
    probe curve monotone and conservative. A confirmation pass at double
    budget with fresh replication ids must land within rel_tol of the target,
    with fewer than 1% of its runs truncated.
    """
    if target_gamma < 10:
        raise ValueError("target run length must be at least 10")
    if not 0 < rel_tol < 0.5:
        raise ValueError("rel_tol must be in (0, 0.5)")
    if plan.scenario.tau is not None:
        raise ValueError("calibration needs a scenario with tau=None (no change)")
    if plan.cap < 10 * target_gamma:
        raise CalibrationError(
            f"cap {plan.cap} is too small to observe run lengths near "
            f"{target_gamma}: need cap >= 10 * target"
        )
    lag = 0 if plan.detector.method == EXACT else plan.detector.w
    runmaxes = _map_reps(_rep_runmax_star, plan, range(plan.replications), workers)

    def probe(b: float) -> float:
        total = 0.0
        for rm in runmaxes:
            idx = int(np.searchsorted(rm, b, side="left"))
            total += idx + 1 + lag if idx < rm.size else plan.cap
        return total / len(runmaxes)

    def within(value: float) -> bool:
        return abs(value - target_gamma) <= rel_tol * target_gamma

    b0 = math.log(target_gamma)

    def solve(tval: float) -> float:
        """Bisect the cached probe curve to the threshold nearest tval."""
        lo = hi = b0
        value = probe(b0)
        if value < tval:
            for _ in range(80):
                lo, hi = hi, hi * 2.0
                if probe(hi) >= tval:
                    break
            else:
                raise CalibrationError("no threshold reaches the target run length")
        elif value > tval:
            for _ in range(300):
                hi, lo = lo, lo / 2.0
                if probe(lo) <= tval:
                    break
            else:
                raise CalibrationError(
                    "target run length is below the detector's minimum"
                )
        else:
            return b0
        for _ in range(200):
            if hi - lo <= 1e-9 * max(1.0, hi):
                break
            mid = 0.5 * (lo + hi)
            if probe(mid) < tval:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    candidate = b0 if within(probe(b0)) else solve(target_gamma)

    base = plan.replications
    for attempt in range(2):
        ids = range(base, base + 2 * plan.replications)
        base += 2 * plan.replications
        conf_plan = replace(plan, detector=replace(plan.detector, b=candidate))
        times = _map_reps(_rep_alarm_star, conf_plan, ids, workers)
        est = _summarize(times)
        if est.truncated / len(times) >= 0.01:
            raise CalibrationError(
                f"{est.truncated} of {len(times)} confirmation runs hit the "
                f"cap: increase cap beyond {plan.cap}"
            )
        if within(est.mean):
            return candidate
        if attempt == 1:
            raise CalibrationError(
                f"confirmation run length {est.mean:.4g} missed the target "
                f"{target_gamma} beyond rel_tol={rel_tol}"
            )
        # One retry: shift the probe target by the measured multiplicative
        # bias between the probe curve and the confirmation estimate.
        candidate = solve(target_gamma * target_gamma / est.mean)
    raise CalibrationError("calibration failed to converge")


@dataclass(frozen=True)
class OcPoint:
    """One operating-characteristic row: target ARL, its threshold, the delay."""

    gamma: float
    b: float
    edd: float
    se: float


def oc_curve(
    plan: McPlan, gamma_list, rel_tol: float = 0.1, workers: int = 1
) -> list[OcPoint]:
    """Calibrate a threshold per target ARL, then estimate the delay at each.

    Replication seeds are shared across rows, so the per-path monotonicity of
    alarm times in b carries over to the curve.
    """
    gammas = [float(g) for g in gamma_list]
    if any(g2 <= g1 for g1, g2 in zip(gammas, gammas[1:])):
        raise ValueError("gamma list must be strictly ascending")
    h0 = replace(plan.scenario, tau=None)
    post = replace(plan.scenario, tau=0)
    rows = []
    for gamma in gammas:
        b = calibrate_threshold(replace(plan, scenario=h0), gamma, rel_tol, workers)
        edd_plan = replace(plan, scenario=post, detector=replace(plan.detector, b=b))
        est = estimate_edd(edd_plan, workers)
        rows.append(OcPoint(gamma=gamma, b=b, edd=est.mean, se=est.se))
    return rows


@dataclass(frozen=True)
class DriftMcResult:
    """Empirical pre/post-change means of the windowed projection statistic."""

    pre: McEstimate
    post: McEstimate


def estimate_drift_mc(
    scenario: StreamScenario, m: int, w: int, replications: int, master_seed: int = 0
) -> DriftMcResult:
    """Measure the pre- and post-change drift of tr(G P) empirically.

    Each replication draws one scored snapshot plus the window of w snapshots
    strictly after it, so the snapshot is independent of the estimated
    projector, matching how the detector scores. The scenario's tau is
    replaced internally (no change for the pre phase, immediate change for
    post).
    """
    if replications < 1:
        raise ValueError("need at least one replication")
    means = {}
    for phase, tau in (("pre", None), ("post", 0)):
        sc = replace(scenario, tau=tau, horizon=w + 1)
        vals = np.empty(replications)
        for i in range(replications):
            rng = rng_from_key(master_seed, 2 * i + (0 if phase == "pre" else 1))
            snaps = list(iter_stream(sc, rng=rng, horizon=w + 1))
            buf = WindowBuffer(w)
            for s in snaps[1:]:
                buf.push(s)
            p = projector(estimate_subspace(buf, m))
            vals[i] = float(np.dot(snaps[0].weights.ravel(), p.ravel()))
        se = float(vals.std(ddof=1) / math.sqrt(replications)) if replications > 1 else 0.0
        means[phase] = McEstimate(
            mean=float(vals.mean()), se=se, used=replications, truncated=0
        )
    return DriftMcResult(pre=means["pre"], post=means["post"])


def verify_equalizer_mc(
    n: int,
    m: int,
    w: int,
    sigma: float,
    delta: float,
    replications: int,
    master_seed: int = 0,
) -> float:
    """Monte Carlo estimate of the tilted-increment moment
    E[exp(delta (tr(G P) - d))] under no change, with d = drift_for_delta.

    Sampling uses the iid-full convention (all n^2 entries independent), the
    window mean is symmetrized before eigendecomposition, and the scored
    snapshot is independent of its window. delta = 0 is the degenerate case
    with value exactly 1. The guard delta * sigma * sqrt(2m) <= 1 keeps the
    exponential moment's Monte Carlo variance manageable; violating it warns
    and refuses.
    """
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= n, got m={m}, n={n}")
    if w < 1:
        raise ValueError("window length must be at least 1")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if replications < 1:
        raise ValueError("need at least one replication")
    if delta == 0:
        return 1.0
    guard = delta * sigma * math.sqrt(2 * m)
    if guard > 1:
        warnings.warn(
            f"exponential moment too heavy-tailed for plain Monte Carlo: "
            f"delta*sigma*sqrt(2m) = {guard:.3g} exceeds 1",
            stacklevel=2,
        )
        raise ValidityError(
            f"refusing equalizer check: delta*sigma*sqrt(2m) = {guard:.3g} > 1"
        )
    d = drift_for_delta(delta, sigma, m)
    if sigma == 0:
        return math.exp(-delta * d)
    rng = rng_from_key(master_seed, 0)
    total = 0.0
    done = 0
    while done < replications:
        k = min(_EQUALIZER_CHUNK, replications - done)
        windows = sigma * rng.standard_normal((k, w, n, n))
        gbar = windows.mean(axis=1)
        gbar = 0.5 * (gbar + gbar.transpose(0, 2, 1))
        _, evecs = np.linalg.eigh(gbar)
        v = evecs[:, :, n - m :]
        p = v @ v.transpose(0, 2, 1)
        g = sigma * rng.standard_normal((k, n, n))
        tr = np.einsum("bij,bij->b", g, p)
        total += float(np.exp(delta * (tr - d)).sum())
        done += k
    return total / replications
