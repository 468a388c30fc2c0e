"""Monte Carlo window conditioning with shrinking-window schedules.

Two samplers estimate the conditional law of the first m coordinates of an
i.i.d. sequence given that the empirical mean of a scalar statistic lies in
an open window:

* rejection: simulate from the baseline and keep sequences whose mean
  lands in the window,
* tilt-importance: simulate from the exponential tilt whose mean sits at
  the window midpoint, keep the windowed sequences, and undo the tilt with
  self-normalized inverse likelihood-ratio weights exp(-lam*S + n*M(lam)).

Importance proposals turn the rare window event into a typical one, which
is what makes far-from-baseline targets tractable.  Both samplers draw only
the first m coordinates explicitly; the remaining n-m coordinates enter the
window statistic through their symbol counts, one multinomial draw per
sequence, which has the same joint law as materializing the tail.

All randomness flows through counter-based streams keyed by (seed, stream
id), so estimates are bit-identical across runs for a fixed configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rng import stream
from .simplex import DEFAULT_WORD_CAP, BlockLaw, Distribution, tv_distance
from .tilting import (
    MomentFunction,
    open_window_mask,
    solve_moment_equality,
)

__all__ = [
    "WindowSchedule",
    "McEstimate",
    "WindowSweepPoint",
    "RateFit",
    "ZeroAcceptanceError",
    "LowEffectiveSampleError",
    "sample_conditional_blocks",
    "window_sweep",
    "rate_fit",
]

METHODS = ("rejection", "tilt-importance")
_METHOD_STREAM = {"rejection": 1, "tilt-importance": 2}
MIN_SAMPLES = 10**3
MIN_ESS = 50.0
_CHUNK_CELLS = 4 * 10**6  # simulated coordinates per chunk; rows scale as 1/n


class ZeroAcceptanceError(RuntimeError):
    """No proposal landed in the window."""


class LowEffectiveSampleError(RuntimeError):
    """Too little effective sample mass to publish an estimate."""


@dataclass(frozen=True)
class WindowSchedule:
    """Shrinking windows epsilon(n) = amplitude * n^(-exponent).

    The exponent must lie in (0, 1/2): that keeps n * epsilon(n)^2 growing,
    so the window stays wide on the CLT scale while still shrinking onto
    the target.
    """

    amplitude: float
    exponent: float

    def __post_init__(self) -> None:
        if self.amplitude <= 0:
            raise ValueError(f"amplitude must be > 0, got {self.amplitude}")
        if not (0 < self.exponent < 0.5):
            raise ValueError(
                f"exponent must lie in (0, 0.5) so that n*eps^2 diverges, got {self.exponent}"
            )

    def epsilon(self, n: int) -> float:
        return self.amplitude * n ** (-self.exponent)


@dataclass(frozen=True)
class McEstimate:
    """Self-normalized estimates of per-word conditional probabilities.

    ``std_errors[i]`` is the weighted sampling standard error of
    ``estimates[i]``; with equal weights it reduces to sample std over the
    square root of the accepted count.  ``ess`` is the effective sample
    size 1 / sum of squared normalized weights (the accepted count under
    rejection).
    """

    words: tuple[tuple[int, ...], ...]
    estimates: np.ndarray = field(repr=False)
    std_errors: np.ndarray = field(repr=False)
    proposals: int = 0
    accepted: int = 0
    acceptance_rate: float = 0.0
    ess: float = 0.0
    method: str = "rejection"
    seed: int = 0

    def estimate_for(self, word: tuple[int, ...]) -> tuple[float, float]:
        """(estimate, standard error) for one word; (0, 0) if never seen."""
        try:
            i = self.words.index(word)
        except ValueError:
            return 0.0, 0.0
        return float(self.estimates[i]), float(self.std_errors[i])


@dataclass(frozen=True)
class WindowSweepPoint:
    """One grid point of a Monte Carlo shrinking-window sweep.

    ``tv_estimate`` is the plug-in distance of the weighted empirical block
    law to the m-fold product of the target tilt; plug-in TV of an
    empirical law is upward-biased, so it is reported together with a
    batch-means standard error rather than corrected.
    """

    n: int
    epsilon: float
    tv_estimate: float
    std_error: float
    acceptance_rate: float
    ess: float
    method: str
    seed: int


@dataclass(frozen=True)
class RateFit:
    """Least-squares fit of ln(tv) against ln(n)."""

    slope: float
    intercept: float
    residual_rms: float
    n_grid: tuple[int, ...]


@dataclass(frozen=True)
class _RawDraws:
    """Accepted draws in proposal order: encoded first-m words and weights."""

    word_idx: np.ndarray
    weights: np.ndarray
    proposals: int
    accepted: int


def _draw_window_batch(
    rng: np.random.Generator,
    law: Distribution,
    h: np.ndarray,
    n: int,
    m: int,
    rows: int,
) -> tuple[np.ndarray, np.ndarray]:
    """First-m symbol indices and full-sequence statistic sums for one chunk."""
    cum = np.cumsum(law.masses)
    cum[-1] = 1.0
    first = np.searchsorted(cum, rng.random((rows, m)), side="right")
    sums = h[first].sum(axis=1)
    if n > m:
        counts = rng.multinomial(n - m, law.masses, size=rows)
        sums = sums + counts @ h
    return first, sums


def _conditioned_draws(
    p: Distribution,
    h: MomentFunction,
    window: tuple[float, float],
    n: int,
    m: int,
    samples: int,
    method: str,
    seed: int,
    stream_index: int,
) -> _RawDraws:
    if not p.strictly_positive:
        raise ValueError("baseline law must be strictly positive")
    if h.dimension != 1:
        raise ValueError("window conditioning needs a scalar statistic")
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    lo, hi = window
    values = h.table[:, 0]
    if not (values.min() < lo < hi < values.max()):
        raise ValueError(
            f"window ({lo}, {hi}) must sit strictly inside the statistic range "
            f"({values.min()}, {values.max()})"
        )
    if samples < MIN_SAMPLES:
        raise ValueError(f"samples must be >= {MIN_SAMPLES}, got {samples}")
    if not (1 <= m <= n):
        raise ValueError(f"need 1 <= m <= n, got m={m}, n={n}")
    if p.alphabet.size**m > DEFAULT_WORD_CAP:
        raise ValueError(f"k^m = {p.alphabet.size**m} words exceeds the cap of {DEFAULT_WORD_CAP}")

    if method == "rejection":
        proposal, lam, logz = p, 0.0, 0.0
    else:
        solution = solve_moment_equality(p, h, [0.5 * (lo + hi)])
        if not solution.feasible:
            raise ValueError(f"window midpoint is not reachable by a tilt: {solution.diagnostic}")
        proposal = solution.tilted
        lam = float(solution.multiplier[0])
        logz = solution.log_partition

    rng = stream(seed, _METHOD_STREAM[method] + 2 * stream_index)
    scale = max(1.0, float(np.abs(values).max()))
    chunk_rows = max(1, _CHUNK_CELLS // max(n, 1))
    encoder = p.alphabet.size ** np.arange(m)
    kept_words: list[np.ndarray] = []
    kept_sums: list[np.ndarray] = []
    remaining = samples
    while remaining > 0:
        rows = min(chunk_rows, remaining)
        remaining -= rows
        first, sums = _draw_window_batch(rng, proposal, values, n, m, rows)
        keep = open_window_mask(sums / n, lo, hi, scale)
        if keep.any():
            kept_words.append(first[keep] @ encoder)
            kept_sums.append(sums[keep])

    if not kept_words:
        raise ZeroAcceptanceError(
            f"0 of {samples} proposals landed in ({lo}, {hi}); "
            "try the tilt-importance method or a wider window"
        )
    word_idx = np.concatenate(kept_words)
    sums = np.concatenate(kept_sums)
    if method == "rejection":
        weights = np.full(word_idx.size, 1.0 / word_idx.size)
    else:
        # Inverse likelihood ratio of the whole sequence, self-normalized.
        log_w = -lam * sums + n * logz
        log_w -= log_w.max()
        weights = np.exp(np.maximum(log_w, -700.0))
        weights /= weights.sum()
    return _RawDraws(
        word_idx=word_idx, weights=weights, proposals=samples, accepted=int(word_idx.size)
    )


def _decode_words(k: int, m: int) -> tuple[tuple[int, ...], ...]:
    return tuple(tuple((idx // k**j) % k for j in range(m)) for idx in range(k**m))


def _law_from(word_idx: np.ndarray, weights: np.ndarray, k: int, m: int, alphabet) -> BlockLaw:
    mass = np.bincount(word_idx, weights=weights, minlength=k**m)
    mass = mass / mass.sum()
    words = _decode_words(k, m)
    return BlockLaw(alphabet, m, {w: float(v) for w, v in zip(words, mass) if v > 0})


def sample_conditional_blocks(
    p: Distribution,
    h: MomentFunction,
    window: tuple[float, float],
    n: int,
    m: int,
    samples: int,
    method: str = "rejection",
    seed: int = 0,
    stream_index: int = 0,
) -> tuple[McEstimate, BlockLaw]:
    """Estimate the law of the first m coordinates of an n-long i.i.d.
    sequence from ``p``, conditioned on its h-mean lying in the open window.

    ``samples`` is the number of proposal sequences; ``stream_index``
    selects an independent substream for the same seed (used by sweeps).
    Raises :class:`ZeroAcceptanceError` when nothing lands in the window
    and :class:`LowEffectiveSampleError` when the effective sample size is
    below 50.
    """
    draws = _conditioned_draws(p, h, window, n, m, samples, method, seed, stream_index)
    weights = draws.weights
    sq_total = float((weights**2).sum())
    ess = 1.0 / sq_total
    if ess < MIN_ESS:
        raise LowEffectiveSampleError(
            f"effective sample size {ess:.1f} < {MIN_ESS:.0f}; increase samples"
        )

    k = p.alphabet.size
    n_words = k**m
    w_sum = np.bincount(draws.word_idx, weights=weights, minlength=n_words)
    w_sq = np.bincount(draws.word_idx, weights=weights**2, minlength=n_words)
    estimates = w_sum
    # Weighted Bessel-corrected sampling variance of each indicator mean;
    # reduces to var(indicator, ddof=1)/accepted for equal weights.
    variances = (w_sq * (1.0 - estimates) ** 2 + (sq_total - w_sq) * estimates**2) / (
        1.0 - sq_total
    )
    std_errors = np.sqrt(np.maximum(variances, 0.0))

    words = _decode_words(k, m)
    total = estimates.sum()
    law = {w: float(v / total) for w, v in zip(words, estimates) if v > 0}
    block = BlockLaw(p.alphabet, m, law)
    estimate = McEstimate(
        words=words,
        estimates=estimates,
        std_errors=std_errors,
        proposals=draws.proposals,
        accepted=draws.accepted,
        acceptance_rate=draws.accepted / draws.proposals,
        ess=float(ess),
        method=method,
        seed=seed,
    )
    return estimate, block


def window_sweep(
    p: Distribution,
    h: MomentFunction,
    alpha: float,
    schedule: WindowSchedule,
    n_grid: list[int],
    m: int,
    samples: int,
    seed: int = 0,
    method: str = "tilt-importance",
    n_batches: int = 10,
) -> list[WindowSweepPoint]:
    """Condition on shrinking windows (alpha - eps_n, alpha + eps_n) along
    ``n_grid`` and estimate the distance to the product law of the tilt
    whose mean is alpha.

    The standard error of each TV estimate comes from batch means: the
    accepted draws are split into up to ``n_batches`` contiguous batches
    (contiguous in proposal order, hence independent) and the TV is
    recomputed per batch.
    """
    from .simplex import product_block_law

    target = solve_moment_equality(p, h, [alpha])
    if not target.feasible:
        raise ValueError(f"target {alpha} is not reachable by a tilt: {target.diagnostic}")
    product = product_block_law(target.tilted, m)
    k = p.alphabet.size

    points = []
    for i, n in enumerate(n_grid):
        eps = schedule.epsilon(n)
        draws = _conditioned_draws(
            p, h, (alpha - eps, alpha + eps), n, m, samples, method, seed, stream_index=i
        )
        ess = 1.0 / float((draws.weights**2).sum())
        if ess < MIN_ESS:
            raise LowEffectiveSampleError(
                f"effective sample size {ess:.1f} < {MIN_ESS:.0f} at n = {n}; "
                "increase samples or shorten the grid (whole-sequence importance "
                "weights degenerate as n grows)"
            )
        block = _law_from(draws.word_idx, draws.weights, k, m, p.alphabet)
        tv = tv_distance(block, product)

        batches = max(2, min(n_batches, draws.accepted // 2))
        edges = np.linspace(0, draws.accepted, batches + 1, dtype=int)
        tvs = []
        for b in range(batches):
            sl = slice(edges[b], edges[b + 1])
            if edges[b + 1] - edges[b] < 1:
                continue
            block_b = _law_from(draws.word_idx[sl], draws.weights[sl], k, m, p.alphabet)
            tvs.append(tv_distance(block_b, product))
        se = (
            float(np.std(tvs, ddof=1) / math.sqrt(len(tvs)))
            if len(tvs) >= 2
            else math.nan
        )
        points.append(
            WindowSweepPoint(
                n=n,
                epsilon=float(eps),
                tv_estimate=float(tv),
                std_error=se,
                acceptance_rate=draws.accepted / draws.proposals,
                ess=ess,
                method=method,
                seed=seed,
            )
        )
    return points


def rate_fit(records: list[tuple[int, float]]) -> RateFit:
    """Ordinary least squares of ln(tv) on ln(n).

    Needs at least 4 grid points and strictly positive tv values (a zero or
    negative estimate usually means the sample budget was too small).
    """
    if len(records) < 4:
        raise ValueError(f"rate fit needs >= 4 points, got {len(records)}")
    ns = np.array([n for n, _ in records], dtype=float)
    tvs = np.array([tv for _, tv in records], dtype=float)
    if np.any(tvs <= 0):
        raise ValueError("nonpositive tv entry; increase the sample budget")
    x = np.log(ns)
    y = np.log(tvs)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return RateFit(
        slope=float(slope),
        intercept=float(intercept),
        residual_rms=float(np.sqrt((resid**2).mean())),
        n_grid=tuple(int(n) for n, _ in records),
    )
