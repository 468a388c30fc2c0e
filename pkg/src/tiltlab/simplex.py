"""Probability vectors on finite alphabets and their information functionals.

Everything downstream (tilting, exact type-space conditioning, Monte Carlo)
is built on the three value types defined here: :class:`Alphabet`,
:class:`Distribution` and :class:`BlockLaw`.  All values are immutable and
all functions are pure, so the module is safe to use from any number of
threads.

Units: entropies and divergences are in nats throughout.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Alphabet",
    "Distribution",
    "BlockLaw",
    "entropy",
    "kl_divergence",
    "tv_distance",
    "product_block_law",
    "DEFAULT_WORD_CAP",
]

# Sums of many small probabilities must stay self-consistent with exact
# enumeration oracles, hence the tight input tolerance.
SUM_TOL_EXACT = 1e-12
SUM_TOL_RENORM = 1e-8
BLOCK_SUM_TOL = 1e-10

# Log-probabilities are floored here before exponentiation so that tilted
# laws of strictly positive baselines stay strictly positive in doubles.
LOG_FLOOR = -745.0

DEFAULT_WORD_CAP = 10**6


@dataclass(frozen=True)
class Alphabet:
    """A finite, ordered alphabet of at least two distinct symbols.

    The tuple order of ``labels`` is the total order used by cumulative
    distribution functions; symbols are addressed by 0-based index.
    """

    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.labels) < 2:
            raise ValueError(f"alphabet needs at least 2 symbols, got {len(self.labels)}")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("alphabet labels must be distinct")

    @property
    def size(self) -> int:
        return len(self.labels)

    @classmethod
    def of_size(cls, k: int) -> "Alphabet":
        """Alphabet labelled "1".."k"."""
        return cls(tuple(str(i) for i in range(1, k + 1)))

    def label_values(self) -> np.ndarray:
        """Labels parsed as floats (e.g. die faces); raises if non-numeric."""
        return np.array([float(s) for s in self.labels])


@dataclass(frozen=True)
class Distribution:
    """A probability vector over an :class:`Alphabet`.

    Validation policy: a mass-sum within 1e-12 of 1 is accepted verbatim,
    within 1e-8 it is renormalized with a warning, beyond that it is
    rejected.  Negative entries are always rejected.
    """

    alphabet: Alphabet
    masses: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        masses = np.asarray(self.masses, dtype=float)
        if masses.shape != (self.alphabet.size,):
            raise ValueError(
                f"mass vector has shape {masses.shape}, expected ({self.alphabet.size},)"
            )
        if not np.all(np.isfinite(masses)):
            raise ValueError("masses must be finite")
        if np.any(masses < 0):
            raise ValueError(f"negative mass entry: min = {masses.min()}")
        gap = abs(float(masses.sum()) - 1.0)
        if gap > SUM_TOL_RENORM:
            raise ValueError(f"masses sum to 1{masses.sum() - 1.0:+.3e}, beyond tolerance {SUM_TOL_RENORM}")
        if gap > SUM_TOL_EXACT:
            warnings.warn(
                f"mass sum off by {gap:.3e}; renormalizing", stacklevel=2
            )
            masses = masses / masses.sum()
        masses = masses.copy()
        masses.flags.writeable = False
        object.__setattr__(self, "masses", masses)

    @property
    def strictly_positive(self) -> bool:
        return bool(self.masses.min() > 0)

    @classmethod
    def uniform(cls, alphabet: Alphabet) -> "Distribution":
        k = alphabet.size
        return cls(alphabet, np.full(k, 1.0 / k))

    @classmethod
    def bernoulli(cls, p1: float) -> "Distribution":
        """Law on labels ("0", "1") with mass ``p1`` on "1"."""
        return cls(Alphabet(("0", "1")), np.array([1.0 - p1, p1]))

    @classmethod
    def point_mass(cls, alphabet: Alphabet, index: int) -> "Distribution":
        masses = np.zeros(alphabet.size)
        masses[index] = 1.0
        return cls(alphabet, masses)


@dataclass(frozen=True)
class BlockLaw:
    """A law on length-``m`` words, stored sparsely as word -> mass.

    Words are tuples of 0-based symbol indices.  Words absent from the map
    carry zero mass.
    """

    alphabet: Alphabet
    m: int
    masses: dict[tuple[int, ...], float] = field(repr=False)

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValueError(f"block length must be >= 1, got {self.m}")
        k = self.alphabet.size
        total = 0.0
        for word, mass in self.masses.items():
            if len(word) != self.m or any(not (0 <= s < k) for s in word):
                raise ValueError(f"word {word} is not a length-{self.m} word over {k} symbols")
            if mass < 0:
                raise ValueError(f"negative mass {mass} on word {word}")
            total += mass
        if abs(total - 1.0) > BLOCK_SUM_TOL:
            raise ValueError(f"block masses sum to 1{total - 1.0:+.3e}, beyond tolerance {BLOCK_SUM_TOL}")

    def mass(self, word: tuple[int, ...]) -> float:
        return self.masses.get(word, 0.0)

    def marginal(self, coordinate: int) -> Distribution:
        """Marginal law of one coordinate (0-based)."""
        if not (0 <= coordinate < self.m):
            raise ValueError(f"coordinate {coordinate} out of range for m={self.m}")
        out = np.zeros(self.alphabet.size)
        for word, mass in self.masses.items():
            out[word[coordinate]] += mass
        return Distribution(self.alphabet, out / out.sum())


def _check_same_alphabet(p: Distribution | BlockLaw, q: Distribution | BlockLaw) -> None:
    if p.alphabet.labels != q.alphabet.labels:
        raise ValueError("operands live on different alphabets")


def entropy(p: Distribution) -> float:
    """Shannon entropy -sum p ln p in nats, with 0 ln 0 = 0.

    Always lies in [0, ln k].
    """
    masses = p.masses
    pos = masses > 0
    return float(-(masses[pos] * np.log(masses[pos])).sum())


def kl_divergence(q: Distribution, p: Distribution) -> float:
    """Relative entropy sum q ln(q/p) in nats, with 0 ln(0/p) = 0.

    Raises if ``p`` puts zero mass where ``q`` is positive: the divergence
    is then infinite and no finite value is reported.
    """
    _check_same_alphabet(q, p)
    qm, pm = q.masses, p.masses
    pos = qm > 0
    if np.any(pm[pos] == 0):
        raise ValueError("kl_divergence is infinite: p vanishes on the support of q")
    return float((qm[pos] * (np.log(qm[pos]) - np.log(pm[pos]))).sum())


def tv_distance(p: Distribution | BlockLaw, q: Distribution | BlockLaw) -> float:
    """Total variation distance, half the L1 gap over points or words."""
    _check_same_alphabet(p, q)
    if isinstance(p, Distribution) and isinstance(q, Distribution):
        return float(0.5 * np.abs(p.masses - q.masses).sum())
    if isinstance(p, BlockLaw) and isinstance(q, BlockLaw):
        if p.m != q.m:
            raise ValueError(f"block lengths differ: {p.m} vs {q.m}")
        words = p.masses.keys() | q.masses.keys()
        return 0.5 * sum(abs(p.mass(w) - q.mass(w)) for w in words)
    raise TypeError("tv_distance needs two distributions or two block laws")


def product_block_law(p: Distribution, m: int, word_cap: int = DEFAULT_WORD_CAP) -> BlockLaw:
    """The i.i.d. law of ``m`` draws from ``p``, as an explicit BlockLaw.

    Materializes all k^m words, so refuses when that exceeds ``word_cap``.
    """
    k = p.alphabet.size
    if m < 1:
        raise ValueError(f"block length must be >= 1, got {m}")
    if k**m > word_cap:
        raise ValueError(f"k^m = {k**m} words exceeds the cap of {word_cap}")
    # Products of up to m masses: work in log-domain, clamp before exp.
    logp = np.log(np.maximum(p.masses, np.exp(LOG_FLOOR)))
    masses: dict[tuple[int, ...], float] = {}
    for word in itertools.product(range(k), repeat=m):
        lp = sum(logp[s] for s in word)
        if lp >= LOG_FLOOR:
            masses[word] = math.exp(lp)
    total = sum(masses.values())
    masses = {w: v / total for w, v in masses.items()}
    return BlockLaw(p.alphabet, m, masses)
