"""
Finitely supported permutations and right-invariant ranking distances.

A :class:`Permutation` is an element of :math:`S_\\infty`, stored in one-line
notation with trailing fixed points trimmed, so ``Permutation((2, 1, 3))`` and
``Permutation((2, 1))`` are the same object for equality and hashing.  Items
and ranks are 1-based throughout.

A ranking ``x_{i_1} > x_{i_2} > ... > x_{i_n}`` corresponds to the permutation
``sigma`` with ``sigma(i_k) = k``; see :func:`from_ranking`.
"""
from __future__ import annotations

import enum
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Distance",
    "Permutation",
    "apply",
    "compose",
    "cycle_cn",
    "distance",
    "distance_matrix",
    "cross_distances",
    "from_ranking",
    "identity",
    "inverse",
    "kendall_naive",
    "parse_permutation",
    "random_permutation",
    "to_ranking",
]


class Distance(str, enum.Enum):
    """The four right-invariant dissimilarities on permutations."""

    KENDALL = "kendall"
    HAMMING = "hamming"
    FOOTRULE = "footrule"
    RANKCORR = "rankcorr"

    @classmethod
    def parse(cls, value: "str | Distance") -> "Distance":
        if isinstance(value, Distance):
            return value
        key = str(value).strip().lower()
        aliases = {
            "kendall": cls.KENDALL,
            "kendalltau": cls.KENDALL,
            "tau": cls.KENDALL,
            "hamming": cls.HAMMING,
            "footrule": cls.FOOTRULE,
            "spearmanfootrule": cls.FOOTRULE,
            "spearman": cls.FOOTRULE,
            "rankcorr": cls.RANKCORR,
            "spearmanrankcorr": cls.RANKCORR,
            "s2": cls.RANKCORR,
        }
        try:
            return aliases[key.replace("_", "").replace("-", "")]
        except KeyError:
            raise ValueError(f"unknown distance {value!r}") from None


class Permutation:
    """Immutable permutation of the positive integers with finite support.

    Parameters
    ----------
    image : sequence of int
        One-line notation ``(sigma(1), ..., sigma(m))``.  Must be a bijection
        of ``{1..m}``.  Trailing fixed points are dropped.
    """

    __slots__ = ("_image", "_hash")

    def __init__(self, image: Iterable[int] = ()):
        img = tuple(int(v) for v in image)
        m = len(img)
        if sorted(img) != list(range(1, m + 1)):
            raise ValueError(f"{img} is not a bijection of {{1..{m}}}")
        while m and img[m - 1] == m:
            m -= 1
        self._image = img[:m]
        self._hash = hash(self._image)

    @property
    def image(self) -> tuple[int, ...]:
        return self._image

    @property
    def support_size(self) -> int:
        return len(self._image)

    def __call__(self, i: int) -> int:
        return apply(self, i)

    def __len__(self) -> int:
        return len(self._image)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Permutation):
            return NotImplemented
        return self._image == other._image

    def __hash__(self) -> int:
        return self._hash

    def __mul__(self, other: "Permutation") -> "Permutation":
        return compose(self, other)

    def __repr__(self) -> str:
        return f"Permutation({self._image})"

    def __str__(self) -> str:
        return ",".join(map(str, self._image))

    def padded(self, m: int) -> np.ndarray:
        """One-line array of length ``m`` (>= support size), extended by fixed points."""
        if m < len(self._image):
            raise ValueError(f"cannot embed a permutation of support {len(self._image)} in S_{m}")
        out = np.arange(1, m + 1, dtype=np.int64)
        out[: len(self._image)] = self._image
        return out


def identity() -> Permutation:
    return Permutation(())


def parse_permutation(text: str) -> Permutation:
    """Parse comma-separated one-line notation, e.g. ``"3,2,1,4,5"``."""
    text = text.strip()
    if not text:
        return identity()
    try:
        values = [int(tok) for tok in text.split(",")]
    except ValueError:
        raise ValueError(f"malformed permutation {text!r}") from None
    return Permutation(values)


def from_ranking(order: Sequence[int]) -> Permutation:
    """Permutation ``sigma`` with ``sigma(order[k-1]) = k``.

    >>> from_ranking((3, 1, 2)).image
    (2, 3, 1)
    """
    n = len(order)
    image = [0] * n
    for rank, item in enumerate(order, start=1):
        item = int(item)
        if not 1 <= item <= n:
            raise ValueError(f"item {item} out of range 1..{n}")
        if image[item - 1]:
            raise ValueError(f"item {item} appears twice")
        image[item - 1] = rank
    return Permutation(image)


def to_ranking(sigma: Permutation, n: int | None = None) -> tuple[int, ...]:
    """Items listed from best to worst, i.e. ``(sigma^{-1}(1), ..., sigma^{-1}(n))``."""
    n = sigma.support_size if n is None else n
    inv = inverse(sigma)
    return tuple(apply(inv, r) for r in range(1, n + 1))


def apply(sigma: Permutation, i: int) -> int:
    if i <= 0:
        raise ValueError(f"permutations act on positive integers, got {i}")
    img = sigma.image
    return img[i - 1] if i <= len(img) else i


def compose(a: Permutation, b: Permutation) -> Permutation:
    """``(a b)(i) = a(b(i))``."""
    m = max(a.support_size, b.support_size)
    pa, pb = a.padded(m), b.padded(m)
    return Permutation(pa[pb - 1])


def inverse(a: Permutation) -> Permutation:
    img = a.image
    inv = [0] * len(img)
    for i, v in enumerate(img, start=1):
        inv[v - 1] = i
    return Permutation(inv)


def cycle_cn(n: int, k: int = 0) -> Permutation:
    """The cycle with ``c(1) = n+k`` and ``c(i) = i-1`` for ``1 < i <= n+k``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    top = n + k
    return Permutation([top] + list(range(1, top)))


def random_permutation(m: int, rng: np.random.Generator) -> Permutation:
    """Uniform element of ``S_m`` by Fisher-Yates."""
    if m < 0:
        raise ValueError(f"m must be >= 0, got {m}")
    img = list(range(1, m + 1))
    for i in range(m - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        img[i], img[j] = img[j], img[i]
    return Permutation(img)


# -- distances ---------------------------------------------------------------


def _count_inversions(seq: list[int]) -> int:
    # bottom-up merge sort; O(m log m)
    n = len(seq)
    src = list(seq)
    dst = [0] * n
    inversions = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if src[i] <= src[j]:
                    dst[k] = src[i]
                    i += 1
                else:
                    dst[k] = src[j]
                    inversions += mid - i
                    j += 1
                k += 1
            dst[k:hi] = src[i:mid] + src[j:hi]
        src, dst = dst, src
        width *= 2
    return inversions


def kendall_naive(a: Permutation, b: Permutation) -> int:
    """Definitional O(m^2) count of discordant pairs."""
    m = max(a.support_size, b.support_size)
    pa, pb = a.padded(m).tolist(), b.padded(m).tolist()
    count = 0
    for i in range(m):
        for j in range(i + 1, m):
            if (pa[i] - pa[j]) * (pb[i] - pb[j]) < 0:
                count += 1
    return count


def distance(d: "Distance | str", a: Permutation, b: Permutation) -> int:
    """Distance between two permutations after embedding both in a common ``S_m``.

    Kendall's tau uses merge-sort inversion counting: listing ``b`` in the
    order that ``a`` ranks items, the discordant pairs are its inversions.
    """
    d = Distance.parse(d)
    m = max(a.support_size, b.support_size)
    if m == 0:
        return 0
    pa, pb = a.padded(m), b.padded(m)
    if d is Distance.KENDALL:
        order = np.empty(m, dtype=np.int64)
        order[pa - 1] = pb
        return _count_inversions(order.tolist())
    diff = pa - pb
    if d is Distance.HAMMING:
        return int(np.count_nonzero(diff))
    if d is Distance.FOOTRULE:
        return int(np.abs(diff).sum())
    return int((diff * diff).sum())


# beyond this support the pair-sign features get too wide; fall back to merge sort per pair
_KENDALL_DENSE_MAX = 1500


def _stack(points: Sequence[Permutation], m: int) -> np.ndarray:
    return np.stack([p.padded(m) for p in points]) if points else np.zeros((0, m), np.int64)


def _kendall_signs(arr: np.ndarray) -> np.ndarray:
    m = arr.shape[1]
    iu, ju = np.triu_indices(m, k=1)
    return np.sign(arr[:, iu] - arr[:, ju]).astype(np.float64)


def cross_distances(d: "Distance | str", xs: Sequence[Permutation], ys: Sequence[Permutation]) -> np.ndarray:
    """Integer matrix ``[d(x_i, y_j)]``.

    Vectorised over the batch.  Kendall uses the pair-sign representation:
    ``d = (N - <s(x), s(y)>) / 2`` with ``N = m(m-1)/2``, which is exact since
    all products are small integers held in float64.
    """
    d = Distance.parse(d)
    m = max([p.support_size for p in xs] + [p.support_size for p in ys] + [1])
    if d is Distance.KENDALL and m > _KENDALL_DENSE_MAX:
        return np.array([[distance(d, x, y) for y in ys] for x in xs], dtype=np.int64).reshape(len(xs), len(ys))
    ax, ay = _stack(xs, m), _stack(ys, m)
    if d is Distance.KENDALL:
        sx, sy = _kendall_signs(ax), _kendall_signs(ay)
        npairs = m * (m - 1) // 2
        inner = np.rint(sx @ sy.T).astype(np.int64)
        return (npairs - inner) // 2
    out = np.empty((len(xs), len(ys)), dtype=np.int64)
    for i in range(len(xs)):
        diff = ax[i][None, :] - ay
        if d is Distance.HAMMING:
            out[i] = np.count_nonzero(diff, axis=1)
        elif d is Distance.FOOTRULE:
            out[i] = np.abs(diff).sum(axis=1)
        else:
            out[i] = (diff * diff).sum(axis=1)
    return out


def distance_matrix(d: "Distance | str", points: Sequence[Permutation]) -> np.ndarray:
    """Symmetric integer matrix of pairwise distances."""
    D = cross_distances(d, points, points)
    # enforce exact symmetry and zero diagonal
    D = np.triu(D, 1)
    return D + D.T
