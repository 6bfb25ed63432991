"""Closed-form design formulas for the spectral CUSUM detector.

Everything here is a first-order asymptotic: the o(1) terms are set to zero
and each formula carries an explicit validity domain (positive denominators,
positive tilt, nondegenerate spectrum). Calls outside the domain raise
ValidityError instead of returning extrapolated numbers, because silently
misusing an asymptotic formula is the main failure mode these closed forms
invite. The Monte Carlo module provides the empirical counterparts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph_model import IndicatorMatrix


class ValidityError(ValueError):
    """A closed-form formula was evaluated outside its validity domain."""


@dataclass(frozen=True)
class Spectrum:
    """Strictly descending, strictly positive eigenvalues of the mean matrix.

    For one-hot community indicators these are the community sizes, which is
    why equal community sizes make the whole closed-form layer inapplicable.
    """

    eigenvalues: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.eigenvalues)
        object.__setattr__(self, "eigenvalues", vals)
        if not vals:
            raise ValidityError("spectrum is empty")
        if any(v <= 0 for v in vals):
            raise ValidityError("eigenvalues must be positive")
        if any(a <= b for a, b in zip(vals, vals[1:])):
            raise ValidityError(
                "degenerate spectrum: eigenvalues must be strictly descending"
            )

    @property
    def m(self) -> int:
        return len(self.eigenvalues)


def spectrum_from_sizes(sizes: Sequence[int]) -> Spectrum:
    """Spectrum of the mean matrix for the given community sizes.

    Repeated sizes are rejected: the closed forms need distinct eigenvalues.
    (The simulator itself accepts repeated sizes; only this layer refuses.)
    """
    sizes = [int(s) for s in sizes]
    if any(s < 1 for s in sizes):
        raise ValueError("community sizes must be positive")
    if len(set(sizes)) != len(sizes):
        raise ValidityError(
            "degenerate spectrum: community sizes must be strictly distinct "
            "for the closed-form design layer"
        )
    return Spectrum(eigenvalues=tuple(sorted(sizes, reverse=True)))


def coupling_matrix(spec: Spectrum) -> np.ndarray:
    """Pairwise mixing coefficients lambda_i lambda_j / (lambda_i - lambda_j)^2.

    Entry (i, j) measures how strongly window noise mixes eigenvector j into
    eigenvector i; the diagonal is unused and left at zero.
    """
    lam = np.asarray(spec.eigenvalues)
    m = lam.size
    out = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            if i != j:
                out[i, j] = lam[i] * lam[j] / (lam[i] - lam[j]) ** 2
    return out


def bias_constant(coupling: np.ndarray) -> float:
    """Second-order constant C in the pre/post drift expansion.

    C = sum_i sum_{j != i} ( sum_{k != j} M_ij M_kj + 2 M_ij^2 ), the exact
    triple sum; the window-mean estimate biases the post-change drift to
    m - C / w^2.
    """
    m_mat = np.asarray(coupling, dtype=float)
    m = m_mat.shape[0]
    total = 0.0
    for i in range(m):
        for j in range(m):
            if j == i:
                continue
            inner = 0.0
            for k in range(m):
                if k != j:
                    inner += m_mat[i, j] * m_mat[k, j]
            total += inner + 2.0 * m_mat[i, j] ** 2
    return total


@dataclass(frozen=True)
class PerturbationConstants:
    """The coupling matrix and its scalar summary C for one spectrum."""

    coupling: np.ndarray
    c: float


def perturbation_constants(spec: Spectrum) -> PerturbationConstants:
    coupling = coupling_matrix(spec)
    return PerturbationConstants(coupling=coupling, c=bias_constant(coupling))


def bias_bound(coupling: np.ndarray) -> float:
    """Upper bound m (m^2 - 1) max M_ij^2 that the constant C never exceeds."""
    m = coupling.shape[0]
    return m * (m * m - 1) * float(np.max(coupling) ** 2)


def expected_drift_post(m: int, c: float, w: int) -> float:
    """Post-change drift expansion m - C / w^2 for a length-w window.

    May be negative for tiny windows; callers treat that as inadmissible for
    drift selection. Derived at unit scale for the top eigenvalues, so the
    simulator's empirical post-change drift (which approaches the eigenvalue
    sum) is deliberately not equated with this number.
    """
    if w < 1:
        raise ValueError("window length must be at least 1")
    return m - c / (w * w)


def kl_info(a: IndicatorMatrix, sigma: float) -> float:
    """Kullback-Leibler information per snapshot: sum of squared community
    sizes over 2 sigma^2."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return sum(s * s for s in a.sizes) / (2.0 * sigma * sigma)


def drift_for_delta(delta: float, sigma: float, m: int) -> float:
    """Drift d = sigma^2 delta / 2 + m / delta paired with the tilt delta."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    return 0.5 * sigma * sigma * delta + m / delta


def equalizer_mgf(delta: float, d: float, sigma: float, m: int) -> float:
    """Design-layer moment value exp(-delta d + sigma^2 delta^2 / 2 + m).

    This is the closed form the drift formula inverts: substituting
    d = drift_for_delta(delta, sigma, m) gives exactly 1.
    """
    return math.exp(-delta * d + 0.5 * sigma * sigma * delta * delta + m)


def delta_star(m: int, c: float, w: int, sigma: float) -> float:
    """Delay-minimizing tilt (m - C/w^2) / sigma^2 for a fixed window."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if w < 1:
        raise ValueError("window length must be at least 1")
    drift = m - c / (w * w)
    if drift <= 0:
        raise ValidityError(
            f"delta_star undefined: m - C/w^2 = {drift:.6g} is not positive "
            f"(window too short for this spectrum)"
        )
    return drift / (sigma * sigma)


def edd_denominator(delta: float, m: int, c: float, w: int, sigma: float) -> float:
    """Denominator 2 delta (m - C/w^2) - sigma^2 delta^2 - 2m of the spectral
    delay approximation; must be positive for the approximation to apply."""
    return 2.0 * delta * (m - c / (w * w)) - sigma * sigma * delta * delta - 2.0 * m


def edd_spectral_approx(gamma: float, delta: float, m: int, c: float, w: float, sigma: float) -> float:
    """First-order expected detection delay of the spectral detector.

    2 ln(gamma) / (2 delta (m - C/w^2) - sigma^2 delta^2 - 2m) + w, valid only
    where the denominator is positive.
    """
    if gamma <= 1:
        raise ValueError("gamma must exceed 1")
    denom = edd_denominator(delta, m, c, w, sigma)
    if denom <= 0:
        raise ValidityError(
            f"asymptotic regime invalid for these parameters: delay "
            f"denominator {denom:.6g} is not positive"
        )
    return 2.0 * math.log(gamma) / denom + w


def edd_at_optimal_tilt(gamma: float, m: int, c: float, w: float, sigma: float) -> float:
    """Spectral delay approximation with the tilt already optimized per window:
    2 ln(gamma) / ((m/sigma - C/(sigma w^2))^2 - 2m) + w.

    This is the curve the optimal window minimizes; substituting the
    delay-minimizing tilt into the general approximation collapses its
    denominator to this square form.
    """
    if gamma <= 1:
        raise ValueError("gamma must exceed 1")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if w <= 0:
        raise ValueError("window length must be positive")
    q = m / sigma - c / (sigma * w * w)
    if q <= 0:
        raise ValidityError(
            f"optimal tilt inadmissible: m - C/w^2 = {q * sigma:.6g} is not "
            f"positive (window too short for this spectrum)"
        )
    denom = q * q - 2.0 * m
    if denom <= 0:
        raise ValidityError(
            f"asymptotic regime invalid for these parameters: delay "
            f"denominator {denom:.6g} is not positive"
        )
    return 2.0 * math.log(gamma) / denom + w


def edd_exact_approx(gamma: float, a: IndicatorMatrix, sigma: float) -> float:
    """First-order expected detection delay of the exact-oracle detector:
    2 sigma^2 ln(gamma) / sum of squared community sizes."""
    if gamma <= 1:
        raise ValueError("gamma must exceed 1")
    energy = sum(s * s for s in a.sizes)
    if energy == 0:
        raise ValidityError("all-background assignment carries no signal")
    return 2.0 * sigma * sigma * math.log(gamma) / energy


def optimal_window(gamma: float, m: int, c: float, sigma: float) -> float:
    """Delay-minimizing window length 2 (ln(gamma) m C / (m^2/sigma - 2m)^2)^(1/3)."""
    if gamma <= 1:
        raise ValueError("gamma must exceed 1")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if c < 0:
        raise ValueError("C must be nonnegative")
    denom = m * m / sigma - 2.0 * m
    if denom == 0:
        raise ValidityError(
            f"optimal window undefined at sigma = m/2 = {m / 2}: singular denominator"
        )
    return 2.0 * (math.log(gamma) * m * c / (denom * denom)) ** (1.0 / 3.0)


def optimal_drift(w_star: float, m: int, c: float, sigma: float) -> float:
    """Drift paired with a chosen window: (m w^2 - C) / (2 w^2) + m w^2 sigma^2 / (m w^2 - C).

    Diverges as m w^2 approaches C from above; values just above the pole are
    honest but enormous. At or below the pole the pairing is meaningless (the
    drift would be negative), so it is rejected.
    """
    gap = m * w_star * w_star - c
    if gap == 0:
        raise ValidityError("optimal drift undefined: m w^2 equals C (pole)")
    if gap < 0:
        raise ValidityError(
            f"optimal drift inadmissible: m w^2 = {m * w_star * w_star:.6g} is "
            f"below C = {c:.6g} (window too short)"
        )
    return gap / (2.0 * w_star * w_star) + m * w_star * w_star * sigma * sigma / gap


def optimality_ratio(gamma: float, m: int, c: float, n: int, sigma: float) -> float:
    """Delay ratio of the spectral detector to the exact oracle.

    1 + ln(gamma)^(-2/3) (m C)^(1/3) n^2 / (m^2/sigma - 2m)^(2/3); approaches
    1 as gamma grows, meaning the spectral detector is first-order optimal.
    """
    if gamma <= 1:
        raise ValueError("gamma must exceed 1")
    if n < 0:
        raise ValueError("n must be nonnegative")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    denom = m * m / sigma - 2.0 * m
    if denom == 0:
        raise ValidityError(
            f"optimality ratio undefined at sigma = m/2 = {m / 2}: singular denominator"
        )
    return 1.0 + (
        math.log(gamma) ** (-2.0 / 3.0)
        * (m * c) ** (1.0 / 3.0)
        * n
        * n
        / (denom * denom) ** (1.0 / 3.0)
    )


def eigenvector_sampling_covariance(
    spec: Spectrum, eigenvectors: np.ndarray, w: int, i: int
) -> np.ndarray:
    """Asymptotic covariance of the i-th estimated eigenvector (1-based) from
    a w-sample estimate: sum over k != i of (M_ki / w) u_k u_k^T.

    This is the classical sample-covariance fluctuation law: it applies when
    the window estimate is a sample covariance of w independent vectors whose
    population covariance has the given spectrum, and the fluctuation lives
    entirely in the span of the remaining eigenvectors.
    """
    if w < 1:
        raise ValueError("window length must be at least 1")
    u = np.asarray(eigenvectors, dtype=float)
    m = spec.m
    if u.ndim != 2 or u.shape[1] < m:
        raise ValueError(f"need at least {m} eigenvector columns")
    if not 1 <= i <= m:
        raise ValueError(f"need 1 <= i <= m, got i={i}")
    coupling = coupling_matrix(spec)
    n = u.shape[0]
    cov = np.zeros((n, n))
    for k in range(1, m + 1):
        if k == i:
            continue
        uk = u[:, k - 1]
        cov += (coupling[k - 1, i - 1] / w) * np.outer(uk, uk)
    return cov


@dataclass(frozen=True)
class DesignPoint:
    """One fully solved design: target ARL, tilt, drift, window, the resulting
    delay approximation, and the delay ratio to the exact oracle."""

    gamma: float
    delta: float
    d: float
    w: float
    edd: float
    ratio: float


def design_point(gamma: float, m: int, c: float, sigma: float, n: int) -> DesignPoint:
    """Solve the full design chain at the optimal window.

    Computes w*, the tilt delta* at w*, the paired drift, the delay
    approximation, and the optimality ratio; raises ValidityError as soon as
    any step leaves its domain.
    """
    w_star = optimal_window(gamma, m, c, sigma)
    w_int = max(1, round(w_star))
    delta = delta_star(m, c, w_int, sigma)
    d = optimal_drift(w_star, m, c, sigma)
    edd = edd_spectral_approx(gamma, delta, m, c, w_int, sigma)
    ratio = optimality_ratio(gamma, m, c, n, sigma)
    return DesignPoint(gamma=gamma, delta=delta, d=d, w=w_star, edd=edd, ratio=ratio)


def theory_report(
    sizes: Sequence[int],
    sigma: float,
    gamma: float,
    window: int | None = None,
    n: int | None = None,
) -> dict:
    """Full design report for one parameter set, with per-field validity.

    Fields outside their validity domain carry null values plus a reason in
    the "validity" map; a degenerate spectrum makes nothing computable and
    raises instead.
    """
    from .graph_model import assignment_from_sizes, build_indicator

    spec = spectrum_from_sizes(sizes)
    consts = perturbation_constants(spec)
    m = spec.m
    if n is None:
        n = sum(int(s) for s in sizes)
    a = build_indicator(assignment_from_sizes(sizes, n=n))

    report: dict = {
        "sizes": [int(s) for s in sizes],
        "sigma": float(sigma),
        "gamma": float(gamma),
        "n": int(n),
        "lambda": list(spec.eigenvalues),
        "M": consts.coupling.tolist(),
        "C": consts.c,
        "I0": kl_info(a, sigma),
        "edd_exact": edd_exact_approx(gamma, a, sigma),
    }
    validity: dict = {}

    def attempt(field: str, fn):
        try:
            value = fn()
        except ValidityError as err:
            report[field] = None
            validity[field] = {"ok": False, "reason": str(err)}
            return None
        report[field] = value
        validity[field] = {"ok": True, "reason": None}
        return value

    w_star = attempt("w_star", lambda: optimal_window(gamma, m, consts.c, sigma))
    if window is not None:
        w_used: float | None = float(window)
    else:
        w_used = None if w_star is None else max(1, round(w_star))
    report["window_used"] = w_used

    if w_used is None:
        for field in ("delta_star", "d_star", "edd_spectral"):
            report[field] = None
            validity[field] = {"ok": False, "reason": "no window available"}
    else:
        w_int = max(1, round(w_used))
        delta = attempt("delta_star", lambda: delta_star(m, consts.c, w_int, sigma))
        attempt("d_star", lambda: optimal_drift(w_used, m, consts.c, sigma))
        if delta is None:
            report["edd_spectral"] = None
            validity["edd_spectral"] = {"ok": False, "reason": "delta_star unavailable"}
        else:
            attempt(
                "edd_spectral",
                lambda: edd_spectral_approx(gamma, delta, m, consts.c, w_int, sigma),
            )
    attempt("ratio", lambda: optimality_ratio(gamma, m, consts.c, n, sigma))
    report["validity"] = validity
    return report
