"""Exact finite-sample conditioning by enumeration of type classes.

A type class is the count vector of a length-n sequence.  Enumerating all
types of a given size makes three exact computations possible on small
alphabets:

* the multinomial probability of each type and its entropy-based sandwich
  bounds (Sanov / method-of-types estimates),
* the law of the first m coordinates of a uniformly random sequence with a
  given type (a multiple hypergeometric, i.e. sampling without
  replacement), together with its collision-coupling distance bound
  m(m-1)/(2n) from the i.i.d. product of the type's frequencies,
* the exact conditional block law given that the empirical measure
  satisfies a moment constraint, as the Sanov-weighted mixture of those
  hypergeometric laws.

These are the verification oracles against which both the tilt solver's
limit law and the Monte Carlo samplers are checked.  Everything here is
deterministic and exact up to floating point; all weights are accumulated
in log-domain because type probabilities decay exponentially.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator

import numpy as np
from scipy.special import gammaln, logsumexp

from .rng import stream
from .simplex import Alphabet, BlockLaw, Distribution, kl_divergence, tv_distance
from .tilting import MomentConstraint, i_project, open_window_mask

__all__ = [
    "TypeClass",
    "ConditionalWeights",
    "ConvergenceRecord",
    "BoundCheck",
    "EnumerationCapError",
    "EmptyConstraintError",
    "NonUniqueProjectionError",
    "enumerate_types",
    "type_log_prob",
    "sanov_bounds_check",
    "conditional_weights",
    "hypergeometric_block_law",
    "hypergeometric_tv_check",
    "conditional_block_law",
    "convergence_sweep",
    "kl_gap",
    "entropy_concentration",
    "EntropyConcentrationReport",
]

DEFAULT_TYPE_CAP = 5 * 10**7
WEIGHT_SUM_TOL = 1e-10
# Tolerance for deciding whether a lattice point satisfies a constraint;
# strict enough that no type one lattice step away is ever misclassified.
LATTICE_TOL = 1e-12


class EnumerationCapError(ValueError):
    """Raised when a type-space enumeration would exceed the configured cap."""


class EmptyConstraintError(ValueError):
    """Raised when no type of the requested size satisfies the constraint."""


class NonUniqueProjectionError(ValueError):
    """Raised when the divergence minimizer over the constraint set is not unique."""


@dataclass(frozen=True)
class TypeClass:
    """The count vector of a length-n sequence over an alphabet."""

    alphabet: Alphabet
    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.counts) != self.alphabet.size:
            raise ValueError(
                f"count vector has length {len(self.counts)}, expected {self.alphabet.size}"
            )
        if any(c < 0 or c != int(c) for c in self.counts):
            raise ValueError("counts must be nonnegative integers")
        if sum(self.counts) < 1:
            raise ValueError("type size n must be >= 1")
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))

    @property
    def n(self) -> int:
        return sum(self.counts)

    def frequency(self) -> Distribution:
        n = self.n
        return Distribution(self.alphabet, np.array(self.counts, dtype=float) / n)


@dataclass(frozen=True)
class ConditionalWeights:
    """The conditional law of the type given that it satisfies a constraint.

    ``weights[i]`` is Pr(type = types[i] | constraint holds); they sum to 1.
    ``event_log_prob`` is the log-probability of the conditioning event
    itself under the baseline.
    """

    constraint: MomentConstraint
    n: int
    types: tuple[TypeClass, ...]
    weights: np.ndarray = field(repr=False)
    event_log_prob: float = 0.0

    def __post_init__(self) -> None:
        weights = np.asarray(self.weights, dtype=float)
        if weights.shape != (len(self.types),):
            raise ValueError("one weight per type required")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        if abs(float(weights.sum()) - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights sum to {weights.sum()}, expected 1")
        weights = weights.copy()
        weights.flags.writeable = False
        object.__setattr__(self, "weights", weights)

    @property
    def normalization_check(self) -> float:
        return float(self.weights.sum())


@dataclass(frozen=True)
class BoundCheck:
    """Outcome of an inequality check, with the slack of each side in nats."""

    passed: bool
    upper_slack: float
    lower_slack: float


@dataclass(frozen=True)
class TvCheck:
    """Outcome of a total-variation bound check."""

    passed: bool
    tv: float
    bound: float


@dataclass(frozen=True)
class ConvergenceRecord:
    """One grid point of an exact convergence sweep.

    ``tv`` is the exact distance between the conditional block law and the
    m-fold product of the projected law; ``envelope_thm`` is the fitted
    C*(m/n^(1/3) + m^2/n) display envelope, ``envelope_alt`` the
    constant-free m*sqrt(ln n / n) + m(m-1)/(2n) envelope, and
    ``bad_mass`` the conditional weight of types farther than ``delta``
    from the projection in L1.
    """

    n: int
    m: int
    tv: float
    envelope_thm: float
    envelope_alt: float
    bad_mass: float
    delta: float


def _as_alphabet(alphabet: Alphabet | int) -> Alphabet:
    return Alphabet.of_size(alphabet) if isinstance(alphabet, int) else alphabet


def type_space_size(k: int, n: int) -> int:
    """Number of types of size n on k symbols: C(n+k-1, k-1)."""
    return math.comb(n + k - 1, k - 1)


def enumerate_types(alphabet: Alphabet | int, n: int, cap: int = DEFAULT_TYPE_CAP) -> Iterator[TypeClass]:
    """Stream every type of size ``n`` exactly once, in lexicographic order.

    Memory stays O(k) per yielded type.  Refuses upfront when the type
    count C(n+k-1, k-1) exceeds ``cap``.
    """
    alphabet = _as_alphabet(alphabet)
    k = alphabet.size
    if n < 1:
        raise ValueError(f"type size must be >= 1, got {n}")
    count = type_space_size(k, n)
    if count > cap:
        raise EnumerationCapError(f"{count} types of size {n} on {k} symbols exceed the cap of {cap}")

    def gen() -> Iterator[TypeClass]:
        for counts in _compositions(n, k):
            yield TypeClass(alphabet, counts)

    return gen()


def _compositions(n: int, parts: int) -> Iterator[tuple[int, ...]]:
    if parts == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in _compositions(n - first, parts - 1):
            yield (first,) + rest


def type_log_prob(t: TypeClass, p: Distribution) -> float:
    """Exact multinomial log-probability of observing type ``t`` under ``p``."""
    if not p.strictly_positive:
        raise ValueError("baseline law must be strictly positive")
    counts = np.array(t.counts, dtype=float)
    coeff = gammaln(t.n + 1) - gammaln(counts + 1).sum()
    return float(coeff + (counts * np.log(p.masses)).sum())


def sanov_bounds_check(t: TypeClass, p: Distribution, slack_tol: float = 1e-9) -> BoundCheck:
    """Check the type-probability sandwich, in log-domain.

        (n+1)^(-k) exp(-n D(Q||P))  <=  Pr(type = Q)  <=  exp(-n D(Q||P))

    where Q is the frequency view of ``t``.  Slacks are the log-scale
    margins by which each inequality holds.
    """
    n, k = t.n, t.alphabet.size
    log_prob = type_log_prob(t, p)
    divergence = kl_divergence(t.frequency(), p)
    upper_slack = -n * divergence - log_prob
    lower_slack = log_prob - (-k * math.log(n + 1) - n * divergence)
    return BoundCheck(
        passed=bool(upper_slack >= -slack_tol and lower_slack >= -slack_tol),
        upper_slack=float(upper_slack),
        lower_slack=float(lower_slack),
    )


def _constraint_scale(c: MomentConstraint) -> float:
    return max(1.0, float(np.abs(c.function.table).max()))


def type_satisfies(t: TypeClass, c: MomentConstraint) -> bool:
    """Does the frequency view of ``t`` satisfy the constraint?

    Comparisons carry a 1e-12-scaled tolerance so lattice points are never
    misclassified; window endpoints are excluded (open interval).
    """
    mean = np.array(t.counts, dtype=float) @ c.function.table / t.n
    return mean_satisfies(mean, c)


def mean_satisfies(mean: np.ndarray | float, c: MomentConstraint) -> bool:
    """Constraint test on a moment value; shared by oracle and samplers."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    if c.epsilon is not None:
        lo, hi = c.window
        return bool(open_window_mask(mean[0], lo, hi, _constraint_scale(c)))
    tol = LATTICE_TOL * _constraint_scale(c)
    if c.kind == "halfspace":
        return bool(mean[0] >= float(c.target[0]) - tol)
    return bool(np.all(np.abs(mean - c.target) <= tol))


def conditional_weights(
    p: Distribution,
    c: MomentConstraint,
    n: int,
    cap: int = DEFAULT_TYPE_CAP,
    probe_limit: int = 400,
) -> ConditionalWeights:
    """Exact Sanov weights: the multinomial law of the type, conditioned on
    the constraint and renormalized in log-domain.

    Raises :class:`EmptyConstraintError` when no size-n type is feasible,
    naming the smallest feasible size below ``probe_limit`` if one exists.
    """
    if not p.strictly_positive:
        raise ValueError("baseline law must be strictly positive")
    if c.function.alphabet.labels != p.alphabet.labels:
        raise ValueError("constraint and baseline live on different alphabets")
    types: list[TypeClass] = []
    log_probs: list[float] = []
    for t in enumerate_types(p.alphabet, n, cap=cap):
        if type_satisfies(t, c):
            types.append(t)
            log_probs.append(type_log_prob(t, p))
    if not types:
        hint = ""
        smallest = _smallest_feasible_n(p.alphabet, c, probe_limit)
        if smallest is not None:
            hint = f"; smallest feasible size is n = {smallest}"
        raise EmptyConstraintError(f"no type of size {n} satisfies the constraint{hint}")
    log_probs_arr = np.array(log_probs)
    total = logsumexp(log_probs_arr)
    weights = np.exp(log_probs_arr - total)
    weights /= weights.sum()
    return ConditionalWeights(
        constraint=c,
        n=n,
        types=tuple(types),
        weights=weights,
        event_log_prob=float(total),
    )


def _smallest_feasible_n(alphabet: Alphabet, c: MomentConstraint, probe_limit: int) -> int | None:
    for n in range(1, probe_limit + 1):
        if type_space_size(alphabet.size, n) > 10**6:
            return None
        if any(type_satisfies(t, c) for t in enumerate_types(alphabet, n)):
            return n
    return None


@lru_cache(maxsize=64)
def _word_count_table(k: int, m: int) -> tuple[tuple[tuple[int, ...], ...], np.ndarray]:
    """All k^m words with their per-symbol occurrence counts."""
    words = tuple(itertools.product(range(k), repeat=m))
    counts = np.zeros((len(words), k), dtype=np.int64)
    for i, word in enumerate(words):
        for s in word:
            counts[i, s] += 1
    return words, counts


def _falling_table(counts: tuple[int, ...], m: int) -> np.ndarray:
    """table[j, c] = falling factorial (n_j)_c for c = 0..m."""
    k = len(counts)
    table = np.ones((k, m + 1), dtype=np.int64)
    for j, nj in enumerate(counts):
        for cc in range(1, m + 1):
            table[j, cc] = table[j, cc - 1] * max(nj - cc + 1, 0)
    return table


def _hypergeometric_masses(t: TypeClass, m: int) -> np.ndarray:
    """Mass of every length-m word under sampling without replacement from t."""
    k = t.alphabet.size
    _, word_counts = _word_count_table(k, m)
    denom = math.prod(range(t.n, t.n - m, -1))
    if t.n**m < 2**62:
        ff = _falling_table(t.counts, m)
        numer = ff[np.arange(k)[None, :], word_counts].prod(axis=1)
        return numer / denom
    # Falling-factorial products overflow int64 at this size: exact big-int path.
    masses = np.empty(len(word_counts))
    for i, row in enumerate(word_counts):
        numer = math.prod(
            math.prod(range(nj, nj - cj, -1)) for nj, cj in zip(t.counts, row)
        )
        masses[i] = numer / denom
    return masses


def hypergeometric_block_law(t: TypeClass, m: int, word_cap: int = 10**6) -> BlockLaw:
    """Exact law of the first m coordinates of a uniform sequence of type t.

    The mass of a word is prod_j (n_j)_{c_j} / (n)_m with c_j the word's
    symbol counts: sampling without replacement from the pool of counts.
    """
    if m < 1:
        raise ValueError(f"block length must be >= 1, got {m}")
    if m > t.n:
        raise ValueError(f"block length {m} exceeds the type size {t.n}")
    k = t.alphabet.size
    if k**m > word_cap:
        raise ValueError(f"k^m = {k**m} words exceeds the cap of {word_cap}")
    words, _ = _word_count_table(k, m)
    masses = _hypergeometric_masses(t, m)
    law = {word: float(mass) for word, mass in zip(words, masses) if mass > 0}
    return BlockLaw(t.alphabet, m, law)


def hypergeometric_tv_check(t: TypeClass, m: int, tol: float = 1e-12) -> TvCheck:
    """Check the collision-coupling bound TV <= m(m-1)/(2n) on type ``t``."""
    from .simplex import product_block_law

    tv = tv_distance(hypergeometric_block_law(t, m), product_block_law(t.frequency(), m))
    bound = m * (m - 1) / (2 * t.n)
    return TvCheck(passed=bool(tv <= bound + tol), tv=float(tv), bound=float(bound))


def conditional_block_law(
    p: Distribution,
    c: MomentConstraint,
    n: int,
    m: int,
    cap: int = DEFAULT_TYPE_CAP,
) -> BlockLaw:
    """Exact conditional law of the first m coordinates given the constraint.

    Mixture of the per-type sampling-without-replacement laws under the
    exact conditional type weights.
    """
    weights = conditional_weights(p, c, n, cap=cap)
    return _block_from_weights(weights, m)


def _block_from_weights(weights: ConditionalWeights, m: int) -> BlockLaw:
    alphabet = weights.types[0].alphabet
    k = alphabet.size
    if m > weights.n:
        raise ValueError(f"block length {m} exceeds the sequence length {weights.n}")
    words, _ = _word_count_table(k, m)
    total = np.zeros(len(words))
    for t, w in zip(weights.types, weights.weights):
        total += w * _hypergeometric_masses(t, m)
    total /= total.sum()
    law = {word: float(mass) for word, mass in zip(words, total) if mass > 0}
    return BlockLaw(alphabet, m, law)


def convergence_sweep(
    p: Distribution,
    c: MomentConstraint,
    m: int,
    n_grid: list[int],
    cap: int = DEFAULT_TYPE_CAP,
) -> list[ConvergenceRecord]:
    """Exact distance of the conditional block law to the projected product
    law along a grid of sample sizes, with both rate envelopes.

    ``delta`` is pinned to n^(-1/3); ``bad_mass`` is the conditional weight
    of types farther than delta from the projection in L1.  The display
    envelope constant is fitted as the max of tv over the constant-free
    rate shape across the grid.
    """
    from .simplex import product_block_law

    projection = i_project(p, c)
    if not projection.feasible:
        raise EmptyConstraintError(f"projection infeasible: {projection.diagnostic}")
    star = projection.tilted
    target_block = product_block_law(star, m)

    raw: list[tuple[int, float, float, float]] = []
    for n in n_grid:
        weights = conditional_weights(p, c, n, cap=cap)
        block = _block_from_weights(weights, m)
        tv = tv_distance(block, target_block)
        delta = n ** (-1.0 / 3.0)
        dists = np.array(
            [np.abs(np.array(t.counts) / t.n - star.masses).sum() for t in weights.types]
        )
        bad_mass = float(weights.weights[dists > delta].sum())
        raw.append((n, tv, delta, bad_mass))

    shape = [m / n ** (1.0 / 3.0) + m * m / n for n, *_ in raw]
    const = max(tv / s for (_, tv, *_), s in zip(raw, shape)) if raw else 0.0
    records = []
    for (n, tv, delta, bad_mass), s in zip(raw, shape):
        records.append(
            ConvergenceRecord(
                n=n,
                m=m,
                tv=float(tv),
                envelope_thm=float(const * s),
                envelope_alt=float(m * math.sqrt(math.log(n) / n) + m * (m - 1) / (2 * n)),
                bad_mass=bad_mass,
                delta=float(delta),
            )
        )
    return records


def kl_gap(
    p: Distribution,
    c: MomentConstraint,
    delta: float,
    grid_density: int = 200,
    cap: int = DEFAULT_TYPE_CAP,
) -> float:
    """Divergence gap of the constraint set outside an L1 ball around the
    projection:

        inf { D(Q||P) - D(P*||P) : Q feasible, ||Q - P*||_1 > delta }.

    Approximated over the feasible lattice of denominator ``grid_density``;
    each far lattice point is then shrunk along the segment toward the
    projection onto the L1 sphere of radius delta (the segment stays
    feasible by convexity and shrinking never increases the divergence), so
    the returned value is a boundary-refined estimate, clamped at 0.

    Raises :class:`NonUniqueProjectionError` when the scan finds a feasible
    lattice point essentially tied with the minimal divergence but farther
    than delta from the projection: the minimizer is then not unique at
    resolution delta.
    """
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    if grid_density < 100:
        raise ValueError(f"grid_density must be >= 100, got {grid_density}")
    if c.epsilon is not None:
        raise ValueError("kl_gap is defined for equality and halfspace constraints, not windows")
    if delta == 0:
        return 0.0
    projection = i_project(p, c)
    if not projection.feasible:
        raise EmptyConstraintError(f"projection infeasible: {projection.diagnostic}")
    star = projection.tilted.masses
    d_star = projection.divergence

    best = math.inf
    min_seen = math.inf
    tied_far = False
    for t in enumerate_types(p.alphabet, grid_density, cap=cap):
        if not type_satisfies(t, c):
            continue
        freq = np.array(t.counts, dtype=float) / grid_density
        div = kl_divergence(Distribution(p.alphabet, freq / freq.sum()), p)
        dist = float(np.abs(freq - star).sum())
        if div < min_seen - 1e-9:
            min_seen = div
            tied_far = dist > delta
        elif div <= min_seen + 1e-9 and dist > delta:
            tied_far = True
        if dist > delta:
            # Boundary refinement: move toward the projection until the L1
            # sphere of radius delta is reached.
            shrink = delta / dist
            q = star + shrink * (freq - star)
            div_q = kl_divergence(Distribution(p.alphabet, q / q.sum()), p)
            best = min(best, div_q - d_star)
    if tied_far and min_seen <= d_star + 1e-9:
        raise NonUniqueProjectionError(
            "a feasible point at minimal divergence lies farther than delta from the projection"
        )
    if math.isinf(best):
        return math.inf
    return max(0.0, float(best))


@dataclass(frozen=True)
class EntropyConcentrationReport:
    """Monte Carlo coverage of an entropy interval for multinomial types.

    ``delta_h`` is the divergence of the sampled frequency vector from the
    baseline (for a uniform baseline this equals ln k minus the entropy);
    quantiles are reported on the 2 N delta_h scale, which is approximately
    chi-squared with k-1 degrees of freedom for large N.
    """

    n_per_sample: int
    samples: int
    seed: int
    interval: tuple[float, float]
    coverage: float
    quantiles: dict[float, float]
    mean_entropy: float


def entropy_concentration(
    p: Distribution,
    n_per_sample: int,
    samples: int,
    seed: int,
    interval: tuple[float, float],
    quantile_levels: tuple[float, ...] = (0.95,),
) -> EntropyConcentrationReport:
    """Sample multinomial types of size N and report how the entropy of the
    empirical frequencies concentrates.

    Returns the fraction of sampled entropies inside ``interval`` and
    empirical quantiles of 2 N delta_h.
    """
    if n_per_sample < 1 or samples < 1:
        raise ValueError("n_per_sample and samples must be >= 1")
    rng = stream(seed, 0)
    counts = rng.multinomial(n_per_sample, p.masses, size=samples)
    freq = counts / n_per_sample
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(freq > 0, freq * np.log(freq), 0.0)
        plogq = np.where(freq > 0, freq * np.log(p.masses)[None, :], 0.0)
    entropies = -plogp.sum(axis=1)
    delta_h = (plogp - plogq).sum(axis=1)
    lo, hi = interval
    coverage = float(((entropies >= lo) & (entropies <= hi)).mean())
    scaled = 2.0 * n_per_sample * delta_h
    quantiles = {float(q): float(np.quantile(scaled, q)) for q in quantile_levels}
    return EntropyConcentrationReport(
        n_per_sample=n_per_sample,
        samples=samples,
        seed=seed,
        interval=(float(lo), float(hi)),
        coverage=coverage,
        quantiles=quantiles,
        mean_entropy=float(entropies.mean()),
    )
