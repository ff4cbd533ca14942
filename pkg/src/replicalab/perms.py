"""Symmetric-group enumeration, cycle statistics, and permutation tensor traces.

Cycle sums are computed in exact integer arithmetic and cross-checked against
their closed forms on every call; a disagreement raises
:class:`~replicalab.linalg.SelfCheckError` because it can only mean a bug.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .linalg import ResourceBudgetError, SelfCheckError, as_array, check_allocation

ENUMERATION_CAP = 9


@dataclass(frozen=True)
class Permutation:
    """A permutation of {0..m-1} stored as the image tuple images[i] = pi(i)."""

    images: tuple

    def __post_init__(self):
        imgs = tuple(int(i) for i in self.images)
        object.__setattr__(self, "images", imgs)
        if sorted(imgs) != list(range(len(imgs))):
            raise ValueError(f"not a bijection on 0..{len(imgs) - 1}: {imgs}")

    @classmethod
    def identity(cls, m: int) -> "Permutation":
        return cls(tuple(range(m)))

    @property
    def degree(self) -> int:
        return len(self.images)

    def __call__(self, i: int) -> int:
        return self.images[i]

    def compose(self, other: "Permutation") -> "Permutation":
        """(self * other)(i) = self(other(i))."""
        return Permutation(tuple(self.images[j] for j in other.images))

    def inverse(self) -> "Permutation":
        inv = [0] * self.degree
        for i, j in enumerate(self.images):
            inv[j] = i
        return Permutation(tuple(inv))

    def cycles(self) -> "CycleDecomposition":
        return cycle_decomposition(self)

    def cycle_type(self) -> tuple:
        """Cycle lengths sorted descending; the conjugacy-class label."""
        return self.cycles().lengths


@dataclass(frozen=True)
class CycleDecomposition:
    cycles: tuple  # tuple of tuples, each cycle starting at its smallest element
    cycle_count: int
    lengths: tuple  # multiset of cycle lengths, sorted descending

    def __post_init__(self):
        covered = sorted(x for c in self.cycles for x in c)
        m = len(covered)
        if covered != list(range(m)):
            raise ValueError("cycles do not partition the domain")
        if self.cycle_count != len(self.cycles):
            raise ValueError("cycle_count mismatch")
        if sum(self.lengths) != m:
            raise ValueError("cycle lengths do not sum to the degree")


def cycle_decomposition(p: Permutation) -> CycleDecomposition:
    m = p.degree
    seen = [False] * m
    cycles = []
    for start in range(m):
        if seen[start]:
            continue
        cyc = [start]
        seen[start] = True
        j = p(start)
        while j != start:
            cyc.append(j)
            seen[j] = True
            j = p(j)
        cycles.append(tuple(cyc))
    lengths = tuple(sorted((len(c) for c in cycles), reverse=True))
    return CycleDecomposition(tuple(cycles), len(cycles), lengths)


def cycle_count(p: Permutation) -> int:
    return cycle_decomposition(p).cycle_count


def enumerate_sym(m: int):
    """All m! permutations in lexicographic order of their image tuples."""
    if m < 1:
        raise ValueError("degree must be positive")
    if m > ENUMERATION_CAP:
        raise ResourceBudgetError(f"enumeration capped at degree {ENUMERATION_CAP}, got {m}")
    return [Permutation(t) for t in itertools.permutations(range(m))]


def _cycle_count_tuple(images: tuple) -> int:
    m = len(images)
    seen = [False] * m
    count = 0
    for start in range(m):
        if seen[start]:
            continue
        count += 1
        j = start
        while not seen[j]:
            seen[j] = True
            j = images[j]
    return count


def _has_only_even_cycles(images: tuple) -> bool:
    m = len(images)
    seen = [False] * m
    for start in range(m):
        if seen[start]:
            continue
        length = 0
        j = start
        while not seen[j]:
            seen[j] = True
            j = images[j]
            length += 1
        if length % 2:
            return False
    return True


def rising_factorial(d: int, m: int) -> int:
    """d (d+1) ... (d+m-1)."""
    out = 1
    for i in range(m):
        out *= d + i
    return out


def double_factorial(n: int) -> int:
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


def sum_d_power_cycles(m: int, d: int) -> int:
    """Sum of d^{#pi} over all of S_m, brute force cross-checked exactly."""
    if m > ENUMERATION_CAP:
        raise ResourceBudgetError(f"degree {m} exceeds enumeration cap {ENUMERATION_CAP}")
    brute = sum(d ** _cycle_count_tuple(t) for t in itertools.permutations(range(m)))
    closed = rising_factorial(d, m)
    if brute != closed:
        raise SelfCheckError(f"cycle sum mismatch at m={m}, d={d}: {brute} != {closed}")
    return brute


def sum_d_power_even_cycles(m: int, d: int) -> int:
    """Sum of d^{#tau} over permutations with only even cycles; zero for odd m."""
    if m > ENUMERATION_CAP:
        raise ResourceBudgetError(f"degree {m} exceeds enumeration cap {ENUMERATION_CAP}")
    brute = sum(
        d ** _cycle_count_tuple(t)
        for t in itertools.permutations(range(m))
        if _has_only_even_cycles(t)
    )
    if m % 2:
        closed = 0
    else:
        prod = 1
        for i in range(0, m - 1, 2):  # d (d+2) ... (d+m-2)
            prod *= d + i
        closed = double_factorial(m - 1) * prod
    if brute != closed:
        raise SelfCheckError(f"even-cycle sum mismatch at m={m}, d={d}: {brute} != {closed}")
    return brute


def permutation_operator(p: Permutation, d: int) -> np.ndarray:
    """Dense operator permuting tensor slots: P |j_1..j_m> = |j_{p^-1(1)}..j_{p^-1(m)}>."""
    m = p.degree
    dim = d**m
    check_allocation(dim * dim)
    inv = p.inverse().images
    digits = _digit_table(m, d)
    # row index digits: out_digit[t] = in_digit[inv[t]]
    weights = d ** np.arange(m - 1, -1, -1)
    rows = digits[:, list(inv)] @ weights
    op = np.zeros((dim, dim), dtype=complex)
    op[rows, np.arange(dim)] = 1.0
    return op


_digit_cache: dict = {}


def _digit_table(m: int, d: int) -> np.ndarray:
    """All base-d digit strings of length m, one row per index 0..d^m-1."""
    key = (m, d)
    if key not in _digit_cache:
        idx = np.arange(d**m)
        cols = [(idx // d** (m - 1 - t)) % d for t in range(m)]
        _digit_cache[key] = np.stack(cols, axis=1)
    return _digit_cache[key]


def trace_perm_tensor(p: Permutation, factors) -> complex:
    """tr(P_p (A_1 x ... x A_m)) evaluated as a product of cycle traces.

    For each cycle (x, p(x), p^2(x), ...) the contribution is the trace of the
    product of the factors in reverse orbit order starting from A_x, so the
    cost is m d^3 instead of d^{2m}.
    """
    mats = [as_array(f) for f in factors]
    if len(mats) != p.degree:
        raise ValueError(f"need {p.degree} factors, got {len(mats)}")
    d = mats[0].shape[0]
    for a in mats:
        if a.shape != (d, d):
            raise ValueError("factors must be square matrices of equal dimension")
    out = 1.0 + 0.0j
    for cyc in p.cycles().cycles:
        prod = mats[cyc[0]]
        for site in reversed(cyc[1:]):
            prod = prod @ mats[site]
        out *= np.trace(prod)
    return complex(out)


def trace_perm_power(p: Permutation, a) -> complex:
    """tr(P_p A^{tensor m}): equal factors, so each cycle gives tr(A^len)."""
    a = as_array(a)
    out = 1.0 + 0.0j
    powers = {}
    for length in p.cycles().lengths:
        if length not in powers:
            powers[length] = np.trace(np.linalg.matrix_power(a, length))
        out *= powers[length]
    return complex(out)


def trace_perm_bipartite(p: Permutation, left: np.ndarray, right: np.ndarray, d: int) -> complex:
    """tr(P_p (L x R)) for multi-slot blocks L on (C^d)^a and R on (C^d)^b.

    Evaluated as sum_K M[K, p*K] with a vectorized gather, cost O(m d^m).
    """
    m = p.degree
    a_slots = round(np.log(left.shape[0]) / np.log(d))
    b_slots = m - a_slots
    if left.shape[0] != d**a_slots or right.shape[0] != d**b_slots:
        raise ValueError("block dimensions inconsistent with d and degree")
    digits = _digit_table(m, d)
    inv = p.inverse().images
    # column multi-index L with l_t = k_{p^-1(t)}
    ldigits = digits[:, list(inv)]
    wa = d ** np.arange(a_slots - 1, -1, -1)
    wb = d ** np.arange(b_slots - 1, -1, -1)
    rows_a = digits[:, :a_slots] @ wa
    cols_a = ldigits[:, :a_slots] @ wa
    if b_slots:
        rows_b = digits[:, a_slots:] @ wb
        cols_b = ldigits[:, a_slots:] @ wb
        vals = left[rows_a, cols_a] * right[rows_b, cols_b]
    else:
        vals = left[rows_a, cols_a]
    return complex(vals.sum())
