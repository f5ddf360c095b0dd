"""
Partial rankings, their compatible permutations and averaged-distance kernels.

A partial ranking ``X_1 > X_2 > ... > X_m`` over items ``{1..n}`` is compatible
with every permutation that sends block ``X_j`` onto the rank interval
``Gamma_j``.  Average distances over pairs of compatible permutations are kept
as exact :class:`~fractions.Fraction` values; the kernels convert to float only
at the exponential.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .kernels import KernelParams, UnsupportedDistanceError
from .permutation import Distance, Permutation, cross_distances

__all__ = [
    "ENUMERATION_CAP",
    "EnumerationLimitError",
    "PartialRanking",
    "as_partial",
    "TopKAlignment",
    "TopKRanking",
    "compatible_set",
    "compatible_size",
    "d_avg",
    "d_avg_bruteforce",
    "d_avg_hamming_coset",
    "d_avg_topk",
    "kernel_averaged_oracle",
    "kernel_partial",
    "kernel_partial_normalized",
    "parse_partial_ranking",
    "topk_alignment",
]

ENUMERATION_CAP = 10**6


class EnumerationLimitError(RuntimeError):
    """The compatible set is too large to enumerate exactly."""

    def __init__(self, size: int, cap: int = ENUMERATION_CAP):
        super().__init__(f"compatible set has {size} permutations, above the cap of {cap}")
        self.size = size
        self.cap = cap


@dataclass(frozen=True)
class PartialRanking:
    """Ordered disjoint blocks covering ``{1..n}``.

    Two partial rankings compare equal iff they have the same ordered blocks.
    """

    blocks: tuple[frozenset[int], ...]
    n: int

    def __init__(self, blocks: Iterable[Iterable[int]], n: int | None = None):
        bl = tuple(frozenset(int(i) for i in b) for b in blocks)
        if not bl:
            raise ValueError("a partial ranking needs at least one block")
        if any(not b for b in bl):
            raise ValueError("blocks must be non-empty")
        items = [i for b in bl for i in b]
        if len(items) != len(set(items)):
            raise ValueError("blocks must be disjoint")
        if n is None:
            n = max(items)
        if any(not 1 <= i <= n for i in items):
            raise ValueError(f"items must lie in 1..{n}")
        if len(items) != n:
            missing = sorted(set(range(1, n + 1)) - set(items))
            raise ValueError(f"blocks must cover 1..{n}; missing {missing}")
        object.__setattr__(self, "blocks", bl)
        object.__setattr__(self, "n", int(n))

    @property
    def profile(self) -> tuple[int, ...]:
        return tuple(len(b) for b in self.blocks)

    def block_of(self) -> list[int]:
        """``labels[i-1]`` is the 0-based index of the block containing item ``i``."""
        labels = [0] * self.n
        for j, b in enumerate(self.blocks):
            for i in b:
                labels[i - 1] = j
        return labels

    def representative(self) -> Permutation:
        """The compatible permutation that ranks each block in increasing item order."""
        image = [0] * self.n
        rank = 1
        for b in self.blocks:
            for i in sorted(b):
                image[i - 1] = rank
                rank += 1
        return Permutation(image)

    def is_topk(self) -> bool:
        return all(len(b) == 1 for b in self.blocks[:-1])

    def as_topk(self) -> "TopKRanking":
        if not self.is_topk():
            raise ValueError(f"{self} is not a top-k ranking")
        # a trailing singleton block is read as the rest of a top-(n-1) list
        return TopKRanking([next(iter(b)) for b in self.blocks[:-1]], self.n)

    def __str__(self) -> str:
        return ">".join(",".join(map(str, sorted(b))) for b in self.blocks)


@dataclass(frozen=True)
class TopKRanking:
    """Top-k list ``i_1 > ... > i_k > rest`` over ``{1..n}``, with ``k < n``."""

    items: tuple[int, ...]
    n: int

    def __init__(self, items: Sequence[int], n: int):
        it = tuple(int(i) for i in items)
        if len(set(it)) != len(it):
            raise ValueError("top-k items must be distinct")
        if any(not 1 <= i <= n for i in it):
            raise ValueError(f"items must lie in 1..{n}")
        if len(it) >= n:
            raise ValueError(f"top-k needs k < n (k={len(it)}, n={n})")
        object.__setattr__(self, "items", it)
        object.__setattr__(self, "n", int(n))

    @property
    def k(self) -> int:
        return len(self.items)

    def to_partial(self) -> PartialRanking:
        rest = sorted(set(range(1, self.n + 1)) - set(self.items))
        return PartialRanking([[i] for i in self.items] + [rest], self.n)

    def __str__(self) -> str:
        return f"n={self.n};" + ">".join(map(str, self.items)) + ">rest"


def as_partial(R, n: int | None = None) -> PartialRanking:
    """View a top-k list or a full permutation (embedded in ``S_n``) as a partial ranking."""
    if isinstance(R, TopKRanking):
        return R.to_partial()
    if isinstance(R, PartialRanking):
        return R
    if isinstance(R, Permutation):
        n = R.support_size if n is None else n
        order = np.argsort(R.padded(n)) + 1
        return PartialRanking([[int(i)] for i in order], n)
    raise TypeError(f"expected a PartialRanking or TopKRanking, got {type(R).__name__}")


def _as_topk(R) -> TopKRanking | None:
    if isinstance(R, TopKRanking):
        return R
    return R.as_topk() if R.is_topk() else None


def parse_partial_ranking(text: str, n: int | None = None) -> PartialRanking:
    """Parse ``"3>2>1>4>5>6,7"`` or ``"n=7;3>2>1>4>5>rest"``."""
    text = text.strip()
    if ";" in text:
        head, text = text.split(";", 1)
        key, _, val = head.partition("=")
        if key.strip() != "n":
            raise ValueError(f"unrecognised header {head!r}")
        n = int(val)
    raw = [tok.strip() for tok in text.split(">")]
    blocks: list[list[int]] = []
    rest_at = None
    for pos, tok in enumerate(raw):
        if tok == "rest":
            if rest_at is not None:
                raise ValueError("'rest' may appear only once")
            rest_at = pos
            blocks.append([])
        else:
            blocks.append([int(v) for v in tok.split(",") if v.strip()])
    if rest_at is not None:
        if n is None:
            raise ValueError("'rest' requires an explicit universe size")
        listed = {i for b in blocks for i in b}
        blocks[rest_at] = sorted(set(range(1, n + 1)) - listed)
        if not blocks[rest_at]:
            del blocks[rest_at]
    return PartialRanking(blocks, n)


# -- compatible sets ---------------------------------------------------------


def compatible_size(R) -> int:
    return math.prod(math.factorial(g) for g in as_partial(R).profile)


def compatible_set(R, cap: int = ENUMERATION_CAP) -> list[Permutation]:
    """All permutations sending block ``X_j`` onto ranks ``Gamma_j``."""
    P = as_partial(R)
    size = compatible_size(P)
    if size > cap:
        raise EnumerationLimitError(size, cap)
    choices = []
    start = 1
    for b in P.blocks:
        items = sorted(b)
        ranks = range(start, start + len(items))
        choices.append([list(zip(items, perm)) for perm in itertools.permutations(ranks)])
        start += len(items)
    out = []
    for combo in itertools.product(*choices):
        image = [0] * P.n
        for pairs in combo:
            for item, rank in pairs:
                image[item - 1] = rank
        out.append(Permutation(image))
    return out


def d_avg_bruteforce(d: "Distance | str", R, R2, cap: int = ENUMERATION_CAP) -> Fraction:
    """Mean of ``d(s, s')`` over ``E_R x E_R2`` by exhaustive enumeration."""
    P, Q = as_partial(R), as_partial(R2)
    if P.n != Q.n:
        raise ValueError(f"universe sizes differ ({P.n} vs {Q.n})")
    E, F = compatible_set(P, cap), compatible_set(Q, cap)
    total = 0
    chunk = max(1, 2_000_000 // max(len(F), 1))
    for lo in range(0, len(E), chunk):
        total += int(cross_distances(d, E[lo : lo + chunk], F).sum())
    return Fraction(total, len(E) * len(F))


# -- top-k closed forms ------------------------------------------------------


@dataclass(frozen=True)
class TopKAlignment:
    common: tuple[int, ...]
    c: tuple[int, ...]
    c_prime: tuple[int, ...]
    u: tuple[int, ...]
    u_prime: tuple[int, ...]
    p: int
    r: int
    m: int
    n_prime: int
    k: int
    n: int


def _check_pair(I: TopKRanking, J: TopKRanking):
    if I.k != J.k:
        raise ValueError(f"top-k lengths differ ({I.k} vs {J.k})")
    if I.n != J.n:
        raise ValueError(f"universe sizes differ ({I.n} vs {J.n})")


def topk_alignment(I: TopKRanking, J: TopKRanking) -> TopKAlignment:
    _check_pair(I, J)
    rank_i = {item: r for r, item in enumerate(I.items, start=1)}
    rank_j = {item: r for r, item in enumerate(J.items, start=1)}
    common = sorted(rank_i.keys() & rank_j.keys())
    only_i = sorted(rank_i.keys() - rank_j.keys())
    only_j = sorted(rank_j.keys() - rank_i.keys())
    k, n = I.k, I.n
    return TopKAlignment(
        common=tuple(common),
        c=tuple(rank_i[x] for x in common),
        c_prime=tuple(rank_j[x] for x in common),
        u=tuple(rank_i[x] for x in only_i),
        u_prime=tuple(rank_j[x] for x in only_j),
        p=len(common),
        r=k - len(common),
        m=n - len(rank_i.keys() | rank_j.keys()),
        n_prime=n - k - 1,
        k=k,
        n=n,
    )


def _rank_pairs(I: TopKRanking, J: TopKRanking) -> tuple[list[tuple[int, int]], int, int]:
    """``(c_l, c'_l)`` for shared items, the sum of ``u`` and ``u'``, and ``|I u J|``."""
    rank_j = {item: r for r, item in enumerate(J.items, start=1)}
    pairs = []
    su = 0
    for r, item in enumerate(I.items, start=1):
        r2 = rank_j.get(item)
        if r2 is None:
            su += r
        else:
            pairs.append((r, r2))
    shared = {item for item in I.items if item in rank_j}
    su += sum(r for r, item in enumerate(J.items, start=1) if item not in shared)
    return pairs, su, 2 * I.k - len(pairs)


def d_avg_topk(d: "Distance | str", I: TopKRanking, J: TopKRanking) -> Fraction:
    """Closed-form average distance between two top-k lists."""
    d = Distance.parse(d)
    if d is Distance.RANKCORR:
        raise UnsupportedDistanceError("no top-k closed form for the rank-correlation distance")
    _check_pair(I, J)
    k, n = I.k, I.n
    pairs, su, union = _rank_pairs(I, J)
    r = k - len(pairs)
    m = n - union
    if d is Distance.KENDALL:
        disc = sum(1 for a, (c1, c2) in enumerate(pairs) for (e1, e2) in pairs[a + 1:] if (c1 - e1) * (c2 - e2) < 0)
        whole = disc + r * (2 * k + 1 - r) - su + r * r + math.comb(n - k, 2)
        return Fraction(2 * whole - math.comb(m, 2), 2)
    if d is Distance.HAMMING:
        moved = sum(1 for c1, c2 in pairs if c1 != c2)
        return Fraction((moved + 2 * r) * (n - k) + m * (n - k - 1), n - k)
    np_ = n - k - 1
    whole = sum(abs(c1 - c2) for c1, c2 in pairs) + r * (n + k + 1) - su + m * np_
    return Fraction(3 * (np_ + 1) * whole - m * np_ * (2 * np_ + 1), 3 * (np_ + 1))


def d_avg_hamming_coset(R1, R2) -> Fraction:
    """Average Hamming distance between partial rankings with the same block sizes.

    Items whose blocks occupy different rank intervals always disagree; items
    landing in the same block ``j`` under both rankings disagree with
    probability ``(gamma_j - 1) / gamma_j``.
    """
    P, Q = as_partial(R1), as_partial(R2)
    if P.n != Q.n:
        raise ValueError(f"universe sizes differ ({P.n} vs {Q.n})")
    gamma = P.profile
    if gamma != Q.profile:
        raise ValueError(f"block-size profiles differ: {gamma} vs {Q.profile}")
    lp, lq = P.block_of(), Q.block_of()
    shared = [0] * len(gamma)
    mismatched = 0
    for a, b in zip(lp, lq):
        if a == b:
            shared[a] += 1
        else:
            mismatched += 1
    acc = Fraction(mismatched)
    for cnt, g in zip(shared, gamma):
        if cnt and g > 1:
            acc += Fraction(cnt * (g - 1), g)
    return acc


def d_avg(d: "Distance | str", R, R2, cap: int = ENUMERATION_CAP) -> Fraction:
    """Exact average distance through the cheapest available route."""
    d = Distance.parse(d)
    P, Q = as_partial(R), as_partial(R2)
    if P.n != Q.n:
        raise ValueError(f"universe sizes differ ({P.n} vs {Q.n})")
    if d is not Distance.RANKCORR:
        I, J = _as_topk(R), _as_topk(R2)
        if I is not None and J is not None and I.k == J.k:
            return d_avg_topk(d, I, J)
    if d is Distance.HAMMING and P.profile == Q.profile:
        return d_avg_hamming_coset(P, Q)
    return d_avg_bruteforce(d, P, Q, cap)


# -- kernels -----------------------------------------------------------------


def _check_partial_distance(d) -> Distance:
    d = Distance.parse(d)
    if d is Distance.RANKCORR:
        raise UnsupportedDistanceError(
            "partial-ranking kernels are defined for Kendall, Hamming and footrule only"
        )
    return d


def kernel_partial(d, p: KernelParams, R, R2, with_nugget: bool = False) -> float:
    """``theta2 exp(-theta1 d_avg(R, R2))``, plus ``theta3`` when ``R == R2`` and requested."""
    d = _check_partial_distance(d)
    value = p.theta2 * math.exp(-p.theta1 * float(d_avg(d, R, R2)))
    if with_nugget and as_partial(R) == as_partial(R2):
        value += p.theta3
    return value


def kernel_partial_normalized(d, p: KernelParams, R, R2, with_nugget: bool = False) -> float:
    """Kernel rescaled to unit diagonal; the nugget is added afterwards."""
    d = _check_partial_distance(d)
    num = d_avg(d, R, R2)
    self_a, self_b = d_avg(d, R, R), d_avg(d, R2, R2)
    value = math.exp(-p.theta1 * float(num - (self_a + self_b) / 2))
    if with_nugget and as_partial(R) == as_partial(R2):
        value += p.theta3
    return value


def kernel_averaged_oracle(d, p: KernelParams, R, R2, cap: int = ENUMERATION_CAP) -> float:
    """Mean of ``K(s, s')`` over compatible pairs (the convolution kernel)."""
    E, F = compatible_set(R, cap), compatible_set(R2, cap)
    D = cross_distances(d, E, F)
    return float(p.theta2 * np.exp(-p.theta1 * D.astype(float)).mean())
