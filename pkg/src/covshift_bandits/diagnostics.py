"""Empirical profiles of a simulated world and oracle reference quantities."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class ShiftProfile:
    """Per-depth minimum mass ratio ``P(B) / Q(B)`` over Q-occupied bins.

    ``gamma_hat`` is the slope of ``log(min ratio)`` against ``log(r)``;
    it is ``inf`` when Q puts clear mass on a bin with no P mass.
    """

    depths: list[int] = field(default_factory=list)
    ratios: list[float] = field(default_factory=list)
    fitted: list[bool] = field(default_factory=list)
    gamma_hat: float = math.nan
    intercept: float = math.nan
    infinite: bool = False
    gamma_bar: float | None = None

    @property
    def levels(self) -> list[float]:
        return [2.0 ** -d for d in self.depths]


@dataclass
class MarginProfile:
    thresholds: np.ndarray
    cdf: np.ndarray
    alpha_hat: float = math.nan
    c_alpha: float = math.nan
    delta_0: float = math.nan


def _cell_index(X: np.ndarray, depth: int) -> np.ndarray:
    size = 1 << depth
    coords = np.minimum(np.floor(X * size).astype(np.int64), size - 1)
    index = np.zeros(len(X), dtype=np.int64)
    for j in range(X.shape[1]):
        index = index * size + coords[:, j]
    return index


def cell_counts(X: np.ndarray, depth: int) -> np.ndarray:
    """Number of rows of ``X`` in each cell at ``depth`` (row-major flattening)."""
    X = np.atleast_2d(X)
    return np.bincount(_cell_index(X, depth), minlength=(1 << depth) ** X.shape[1])


def transfer_exponent_from_masses(
    p_masses: dict[int, np.ndarray],
    q_masses: dict[int, np.ndarray],
    p_counts: dict[int, np.ndarray] | None = None,
    q_counts: dict[int, np.ndarray] | None = None,
    min_count: int = 20,
) -> ShiftProfile:
    """Fit the transfer exponent from per-depth bin masses.

    With counts supplied, only bins holding at least ``min_count`` Q samples
    enter the minimum; a depth is fitted only when the minimizing bin also
    holds ``min_count`` P samples. Fitting stops at the first depth that
    fails. If already the first depth has such a Q bin with no P sample, the
    profile is flagged infinite.
    """
    prof = ShiftProfile()
    for depth in sorted(q_masses):
        p, q = np.asarray(p_masses[depth], float), np.asarray(q_masses[depth], float)
        occupied = q > 0
        if q_counts is not None:
            occupied &= q_counts[depth] >= min_count
        if not occupied.any():
            continue
        ratio = np.where(occupied, p / np.where(occupied, q, 1.0), np.inf)
        b = int(np.argmin(ratio))
        prof.depths.append(depth)
        prof.ratios.append(float(ratio[b]))
        usable = ratio[b] > 0 and (p_counts is None or p_counts[depth][b] >= min_count)
        if not usable:
            if ratio[b] == 0 and not any(prof.fitted):
                prof.infinite = True
            prof.fitted.append(False)
            break
        prof.fitted.append(True)
    if prof.infinite:
        prof.gamma_hat = math.inf
        return prof
    pts = [(d, r) for d, r, ok in zip(prof.depths, prof.ratios, prof.fitted) if ok]
    if len(pts) >= 2:
        log_r = np.array([-d * math.log(2.0) for d, _ in pts])
        log_ratio = np.log([r for _, r in pts])
        slope, intercept = np.polyfit(log_r, log_ratio, 1)
        prof.gamma_hat = float(slope)
        prof.intercept = float(intercept)
    return prof


def estimate_transfer_exponent(samples_p, samples_q, depths=(1, 2, 3, 4, 5), min_count: int = 20) -> ShiftProfile:
    samples_p, samples_q = np.atleast_2d(samples_p), np.atleast_2d(samples_q)
    pc = {d: cell_counts(samples_p, d) for d in depths}
    qc = {d: cell_counts(samples_q, d) for d in depths}
    pm = {d: c / len(samples_p) for d, c in pc.items()}
    qm = {d: c / len(samples_q) for d, c in qc.items()}
    return transfer_exponent_from_masses(pm, qm, pc, qc, min_count)


def aggregate_gamma(gammas, lengths) -> float:
    """Phase-length weighted mean of per-phase transfer exponents."""
    lengths = np.asarray(lengths, float)
    return float(np.dot(gammas, lengths) / lengths.sum())


def margins(means: np.ndarray) -> np.ndarray:
    """Gap between the best and second best arm at each row."""
    top2 = np.sort(means, axis=1)[:, -2:]
    return top2[:, 1] - top2[:, 0]


def empirical_margin_cdf(field_, q_sampler, thresholds, rng=None, n_samples: int = 100_000, fit_range=(0.01, 0.3)) -> MarginProfile:
    """Monte-Carlo estimate of ``Q(0 < f1 - f2 <= t)`` at each threshold."""
    thresholds = np.asarray(thresholds, float)
    if np.any(np.diff(thresholds) < 0):
        raise ValueError("thresholds must be sorted ascending")
    rng = np.random.default_rng(rng)
    gaps = margins(field_.means(q_sampler.sample(rng, n_samples)))
    return margin_profile(gaps, thresholds, fit_range)


def margin_profile(gaps: np.ndarray, thresholds: np.ndarray, fit_range=(0.01, 0.3)) -> MarginProfile:
    """Margin CDF from per-sample gaps; exact ties (gap 0) count in the
    denominator but never in the numerator. The exponent is fitted on
    ``log cdf`` against ``log threshold`` over ``fit_range``."""
    n = len(gaps)
    positive = np.sort(gaps[gaps > 0])
    cdf = np.searchsorted(positive, thresholds, side="right") / n
    prof = MarginProfile(np.asarray(thresholds, float), cdf, delta_0=fit_range[1])
    use = (thresholds >= fit_range[0]) & (thresholds <= fit_range[1]) & (cdf > 0)
    if use.sum() >= 2:
        slope, intercept = np.polyfit(np.log(thresholds[use]), np.log(cdf[use]), 1)
        prof.alpha_hat = float(slope)
        prof.c_alpha = float(math.exp(intercept))
    return prof


def box_counting(samples_q, depths) -> list[tuple[float, int]]:
    samples_q = np.atleast_2d(samples_q)
    return [(2.0 ** -d, int(np.unique(_cell_index(samples_q, d)).size)) for d in depths]


def oracle_level(t: int, n_p: int, n_arms: int, delta: float, alpha: float, d: float, gamma: float) -> float:
    """Smallest dyadic level at or above the oracle bias-variance balance."""
    tau = t - n_p - 1
    if tau <= 0:
        raise ValueError("oracle level needs t > n_p + 1")
    c = n_arms * math.log(n_arms / delta)
    target = (c / tau) ** (1.0 / (2 + alpha + d))
    if n_p > 0:
        target = min(target, (c / n_p) ** (1.0 / (2 + alpha + d + gamma)))
    return smallest_level_above(target)


def smallest_level_above(value: float) -> float:
    if value >= 1.0:
        return 1.0
    depth = math.floor(-math.log2(value))
    # guard floating error in log2 at exact powers of two
    while 2.0 ** -depth < value:
        depth -= 1
    while 2.0 ** -(depth + 1) >= value:
        depth += 1
    return 2.0 ** -depth


def phi(n_r: int, r: float, n_arms: int, delta: float, lam: float, level_coef: float = 8.0) -> float:
    """Bias-variance score ``sqrt(c K ln(K/delta) / n_r) + lam r``; infinite when ``n_r == 0``."""
    if n_r == 0:
        return math.inf
    return math.sqrt(level_coef * n_arms * math.log(n_arms / delta) / n_r) + lam * r
