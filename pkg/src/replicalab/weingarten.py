"""Exact unitary-group moment calculus.

The coefficient table solves the Gram system ``sum_tau d^{#(sigma tau^-1)}
w(tau) = [sigma = id]`` in exact rational arithmetic, collapsed over conjugacy
classes (the coefficients are class functions). Moment evaluation follows the
pairing rule

    E[U_{i1 j1} .. U_{im jm} U+_{i'1 j'1} .. U+_{i'm j'm}]
        = sum_{sigma, tau} [i_{sigma(t)} = j'_t] [j_{tau(t)} = i'_t] w(sigma tau^-1)

from which trace-product moments and the m-fold twirl follow. Conventions are
pinned by Monte Carlo tests rather than trusted.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from math import factorial

import numpy as np

from .linalg import as_array
from .perms import Permutation, enumerate_sym, trace_perm_power

TABLE_DEGREE_CAP = 6


class UnsupportedRegimeError(ValueError):
    """Parameters outside the exactly-supported regime (e.g. d < m)."""


def _partitions(m: int):
    """Integer partitions of m in descending-tuple form."""
    if m == 0:
        yield ()
        return
    for first in range(m, 0, -1):
        for rest in _partitions(m - first):
            if not rest or rest[0] <= first:
                yield (first,) + rest


@dataclass(frozen=True)
class WeingartenTable:
    """Exact moment coefficients for degree ``m`` at dimension ``d``.

    ``values`` maps a cycle type (partition of m, descending tuple) to an
    exact :class:`~fractions.Fraction`; ``class_sizes`` counts permutations
    of each type.
    """

    m: int
    d: int
    values: dict
    class_sizes: dict

    def weight(self, perm_or_type) -> Fraction:
        if isinstance(perm_or_type, Permutation):
            key = perm_or_type.cycle_type()
        else:
            key = tuple(sorted((int(x) for x in perm_or_type), reverse=True))
        return self.values[key]

    def abs_sum(self) -> Fraction:
        return sum(
            (self.class_sizes[t] * abs(v) for t, v in self.values.items()),
            start=Fraction(0),
        )

    def abs_sum_identity_holds(self) -> bool:
        """Check sum_tau |w(tau)| = (d-m)!/d! exactly."""
        return self.abs_sum() == Fraction(factorial(self.d - self.m), factorial(self.d))

    def to_json_dict(self) -> dict:
        vals = {
            "+".join(str(x) for x in t): f"{v.numerator}/{v.denominator}"
            for t, v in sorted(self.values.items())
        }
        return {"m": self.m, "d": self.d, "values": vals}


def _solve_fraction_system(a, b):
    """Gaussian elimination over Fractions; a is square, returns x with a x = b."""
    n = len(b)
    mat = [row[:] + [b[i]] for i, row in enumerate(a)]
    for col in range(n):
        piv = next((r for r in range(col, n) if mat[r][col] != 0), None)
        if piv is None:
            raise UnsupportedRegimeError("singular coefficient system")
        mat[col], mat[piv] = mat[piv], mat[col]
        inv = Fraction(1) / mat[col][col]
        mat[col] = [x * inv for x in mat[col]]
        for r in range(n):
            if r != col and mat[r][col] != 0:
                f = mat[r][col]
                mat[r] = [x - f * y for x, y in zip(mat[r], mat[col])]
    return [mat[i][n] for i in range(n)]


_table_cache: dict = {}


def weingarten_table(m: int, d: int) -> WeingartenTable:
    """Build (or fetch from cache) the exact coefficient table for (m, d).

    Requires d >= m so the Gram matrix is invertible; degree is capped at
    TABLE_DEGREE_CAP. Construction verifies the defining orthogonality
    relation on class representatives.
    """
    if m < 1:
        raise ValueError("degree must be positive")
    if m > TABLE_DEGREE_CAP:
        raise UnsupportedRegimeError(f"degree {m} exceeds table cap {TABLE_DEGREE_CAP}")
    if d < m:
        raise UnsupportedRegimeError(f"need d >= m, got d={d}, m={m}")
    key = (m, d)
    if key in _table_cache:
        return _table_cache[key]

    perms = enumerate_sym(m)
    types = sorted({p.cycle_type() for p in perms})
    type_index = {t: i for i, t in enumerate(types)}
    class_sizes = {t: 0 for t in types}
    for p in perms:
        class_sizes[p.cycle_type()] += 1
    reps = {}
    for p in perms:
        reps.setdefault(p.cycle_type(), p)

    # class-collapsed Gram system: row per representative sigma_a,
    # column per class b with entry sum_{tau in class b} d^{#(sigma_a tau^-1)}
    n = len(types)
    gram = [[Fraction(0)] * n for _ in range(n)]
    inverses = [p.inverse() for p in perms]
    for a, t in enumerate(types):
        sigma = reps[t]
        for p_inv, p in zip(inverses, perms):
            b = type_index[p.cycle_type()]
            gram[a][b] += Fraction(d ** sigma.compose(p_inv).cycles().cycle_count)
    identity_type = (1,) * m
    rhs = [Fraction(1) if t == identity_type else Fraction(0) for t in types]
    solution = _solve_fraction_system(gram, rhs)
    values = {t: solution[i] for i, t in enumerate(types)}

    table = WeingartenTable(m=m, d=d, values=values, class_sizes=class_sizes)
    _verify_orthogonality(table, perms, reps)
    _table_cache[key] = table
    return table


def _verify_orthogonality(table: WeingartenTable, perms, reps) -> None:
    """Spot-check sum_tau w(sigma tau^-1) d^{#(tau pi^-1)} = [sigma = pi]."""
    from .linalg import SelfCheckError

    d = table.d
    rep_list = list(reps.values())
    for sigma in rep_list:
        for pi in rep_list:
            total = Fraction(0)
            for tau in perms:
                tau_inv = tau.inverse()
                total += table.weight(sigma.compose(tau_inv)) * d ** tau.compose(
                    pi.inverse()
                ).cycles().cycle_count
            expected = Fraction(1) if sigma.images == pi.images else Fraction(0)
            if total != expected:
                raise SelfCheckError(
                    f"orthogonality failed at m={table.m}, d={d}, "
                    f"sigma={sigma.images}, pi={pi.images}: {total}"
                )


def haar_moment_entries(index_i, index_j, index_ip, index_jp, d: int) -> float:
    """Exact mixed entry moment E[prod U_{i_t j_t} prod U+_{i'_t j'_t}]."""
    m = len(index_i)
    if not (len(index_j) == len(index_ip) == len(index_jp) == m):
        raise ValueError("index tuples must have equal length")
    table = weingarten_table(m, d)
    total = Fraction(0)
    for sigma in itertools.permutations(range(m)):
        if any(index_i[sigma[t]] != index_jp[t] for t in range(m)):
            continue
        for tau in itertools.permutations(range(m)):
            if any(index_j[tau[t]] != index_ip[t] for t in range(m)):
                continue
            prod = Permutation(sigma).compose(Permutation(tau).inverse())
            total += table.weight(prod)
    return float(total)


_pair_class_cache: dict = {}


def _pair_class_table(m: int) -> tuple:
    """Counts C[a][b][c] of pairs (sigma, tau) with types a, b and type(sigma tau) = c."""
    if m in _pair_class_cache:
        return _pair_class_cache[m]
    perms = enumerate_sym(m)
    types = sorted({p.cycle_type() for p in perms})
    tindex = {t: i for i, t in enumerate(types)}
    n = len(types)
    counts = np.zeros((n, n, n), dtype=object)
    images = [p.images for p in perms]
    type_of = [tindex[p.cycle_type()] for p in perms]

    def type_of_tuple(t):
        m_ = len(t)
        seen = [False] * m_
        lens = []
        for s in range(m_):
            if seen[s]:
                continue
            ln = 0
            j = s
            while not seen[j]:
                seen[j] = True
                j = t[j]
                ln += 1
            lens.append(ln)
        return tuple(sorted(lens, reverse=True))

    for i, sig in enumerate(images):
        for j, tau in enumerate(images):
            comp = tuple(sig[x] for x in tau)  # sigma(tau(x))
            counts[type_of[i], type_of[j], tindex[type_of_tuple(comp)]] += 1
    _pair_class_cache[m] = (types, counts)
    return types, counts


def pairwise_class_moment(f_by_type: dict, g_by_type: dict, m: int, d: int) -> complex:
    """sum_{sigma,tau in S_m} w(sigma tau) f(tau) g(sigma) for class functions f, g."""
    table = weingarten_table(m, d)
    types, counts = _pair_class_table(m)
    total = 0.0 + 0.0j
    n = len(types)
    for a in range(n):
        g = g_by_type[types[a]]
        if g == 0:
            continue
        for b in range(n):
            f = f_by_type[types[b]]
            if f == 0:
                continue
            for c in range(n):
                cnt = counts[a, b, c]
                if cnt:
                    total += int(cnt) * float(table.weight(types[c])) * f * g
    return total


def haar_expect_trace_power(a, b, m: int) -> complex:
    """Exact E[tr(A U B U+)^m] over the Haar measure.

    Evaluated as ``sum_{sigma,tau} w(sigma tau) tr(P_tau A^m) tr(P_sigma B^m)``
    with the traces collapsed over cycle types.
    """
    a = as_array(a)
    b = as_array(b)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("A and B must be square with equal dimensions")
    d = a.shape[0]
    types, _ = _pair_class_table(m)
    reps = {}
    for p in enumerate_sym(m):
        reps.setdefault(p.cycle_type(), p)
    f_a = {t: trace_perm_power(reps[t], a) for t in types}
    f_b = {t: trace_perm_power(reps[t], b) for t in types}
    return pairwise_class_moment(f_a, f_b, m, d)


def haar_frame_potential_exact(t: int, d: int) -> Fraction:
    """Exact E[|tr U|^{2t}] via the degree-t table; equals t! for d >= t.

    The pairing sum collapses to t! * sum_u w(u) d^{#u} because for fixed tau
    the product sigma tau^-1 sweeps the whole group.
    """
    table = weingarten_table(t, d)
    total = Fraction(0)
    for typ, v in table.values.items():
        total += table.class_sizes[typ] * v * d ** len(typ)
    return factorial(t) * total


def haar_sample(d: int, rng) -> np.ndarray:
    """Haar-distributed unitary via Ginibre QR with phase correction."""
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r)
    return q * (diag / np.abs(diag))


def haar_sample_batch(d: int, count: int, rng) -> np.ndarray:
    """Stacked Haar unitaries of shape (count, d, d)."""
    z = (rng.standard_normal((count, d, d)) + 1j * rng.standard_normal((count, d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    return q * (diag / np.abs(diag))[:, None, :]


def mc_trace_power(a, b, m: int, n_samples: int, rng, chunk: int = 50_000):
    """Monte Carlo estimate of E[tr(A U B U+)^m] over Haar samples.

    Batched QR keeps this fast enough for 1e6-sample runs. Returns
    (mean, stderr) of the real part; A, B Hermitian makes the statistic real.
    """
    a = as_array(a)
    b = as_array(b)
    d = a.shape[0]
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        u = haar_sample_batch(d, n, rng)
        traces = np.einsum("ij,bjk,kl,bil->b", a, u, b, u.conj(), optimize=True)
        vals = np.real(traces**m)
        total += float(vals.sum())
        total_sq += float((vals**2).sum())
        done += n
    mean = total / n_samples
    var = max(total_sq / n_samples - mean**2, 0.0)
    return mean, float(np.sqrt(var / n_samples))


@dataclass(frozen=True)
class MomentBoundReport:
    """Empirical check of the |w| <= O(d^{#pi - 2m}) decay."""

    m: int
    d: int
    ratios: dict  # cycle type -> |w| * d^{2m - #pi}
    max_ratio: float
    bound: float


def montanaro_bound_check(m: int, d: int, bound: float = 20.0) -> MomentBoundReport:
    """Report max over cycle types of |w(pi, d)| d^{2m - #pi} and assert it is small."""
    from .linalg import SelfCheckError

    if m > d ** (2 / 3) + 1e-9:
        raise UnsupportedRegimeError(f"decay bound regime needs m <= d^(2/3), got m={m}, d={d}")
    table = weingarten_table(m, d)
    ratios = {
        t: float(abs(v)) * d ** (2 * m - len(t)) for t, v in table.values.items()
    }
    max_ratio = max(ratios.values())
    if max_ratio > bound:
        raise SelfCheckError(
            f"coefficient decay ratio {max_ratio:.3f} exceeds {bound} at m={m}, d={d}"
        )
    return MomentBoundReport(m=m, d=d, ratios=ratios, max_ratio=max_ratio, bound=bound)
