"""Dense complex linear algebra over small Hilbert spaces.

Everything here is plain ``numpy`` on dense arrays. States and unitaries get
thin validated wrapper classes; the operational functions accept either the
wrappers or bare arrays. A configurable global memory budget guards tensor
constructions so oversize requests fail fast with :class:`ResourceBudgetError`
instead of exhausting RAM.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-10
EIGENVALUE_FLOOR = -1e-9
UNITARITY_TOL = 1e-10

_DEFAULT_BUDGET_BYTES = 2 * 1024**3
_budget_bytes = _DEFAULT_BUDGET_BYTES


class ResourceBudgetError(MemoryError):
    """Requested allocation exceeds the configured memory budget."""


class SelfCheckError(RuntimeError):
    """An internal exact identity failed; indicates a bug, not bad input."""


def memory_budget() -> int:
    return _budget_bytes


def set_memory_budget(n_bytes: int) -> None:
    global _budget_bytes
    if n_bytes <= 0:
        raise ValueError("memory budget must be positive")
    _budget_bytes = int(n_bytes)


def check_allocation(n_entries: int, itemsize: int = 16) -> None:
    """Raise ResourceBudgetError if ``n_entries`` complex values exceed the budget."""
    if n_entries * itemsize > _budget_bytes:
        raise ResourceBudgetError(
            f"allocation of {n_entries} entries ({n_entries * itemsize / 2**30:.2f} GiB) "
            f"exceeds budget of {_budget_bytes / 2**30:.2f} GiB"
        )


def as_array(x) -> np.ndarray:
    """Unwrap UnitaryMatrix / DensityMatrix / PureState, else asarray."""
    if isinstance(x, (UnitaryMatrix, DensityMatrix)):
        return x.matrix
    if isinstance(x, PureState):
        return x.amplitudes
    return np.asarray(x)


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=complex)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class UnitaryMatrix:
    """A validated d x d unitary. Treated as immutable after construction."""

    matrix: np.ndarray

    def __post_init__(self):
        m = _frozen(self.matrix)
        object.__setattr__(self, "matrix", m)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"unitary must be square, got shape {m.shape}")
        if not np.all(np.isfinite(m.view(float))):
            raise ValueError("unitary contains non-finite entries")
        d = m.shape[0]
        defect = np.linalg.norm(m.conj().T @ m - np.eye(d))
        if defect > UNITARITY_TOL * d:
            raise ValueError(f"not unitary: ||U+U - I||_HS = {defect:.3e}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class DensityMatrix:
    """A validated density matrix: Hermitian, unit trace, PSD up to tolerance."""

    matrix: np.ndarray

    def __post_init__(self):
        m = _frozen(self.matrix)
        object.__setattr__(self, "matrix", m)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {m.shape}")
        if np.abs(m - m.conj().T).max() > HERMITICITY_TOL:
            raise ValueError("density matrix is not Hermitian within tolerance")
        tr = np.trace(m)
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"density matrix trace {tr} differs from 1")
        evals = np.linalg.eigvalsh(m)
        if evals.min() < EIGENVALUE_FLOOR:
            raise ValueError(f"density matrix has eigenvalue {evals.min():.3e} < {EIGENVALUE_FLOOR}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)


@dataclass(frozen=True)
class PureState:
    """A validated unit vector."""

    amplitudes: np.ndarray

    def __post_init__(self):
        v = _frozen(self.amplitudes).reshape(-1)
        object.__setattr__(self, "amplitudes", v)
        nrm = np.linalg.norm(v)
        if abs(nrm - 1.0) > UNITARITY_TOL:
            raise ValueError(f"state norm {nrm} differs from 1")

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())


def maximally_mixed(d: int) -> DensityMatrix:
    return DensityMatrix(np.eye(d, dtype=complex) / d)


def tensor_product(a, b) -> np.ndarray:
    """Kronecker product with a budget check on the output size."""
    a = as_array(a)
    b = as_array(b)
    check_allocation(a.size * b.size)
    return np.kron(a, b)


def tensor_power(a, k: int) -> np.ndarray:
    """k-fold Kronecker power (k >= 1)."""
    a = as_array(a)
    if k < 1:
        raise ValueError("tensor power requires k >= 1")
    check_allocation(a.size**k)
    out = a
    for _ in range(k - 1):
        out = np.kron(out, a)
    return out


def partial_trace(m, dims, keep) -> np.ndarray:
    """Trace out all tensor factors except those in ``keep``.

    Parameters
    ----------
    m : array on the tensor product with factor dimensions ``dims``
    dims : sequence of positive ints whose product equals the matrix dimension
    keep : iterable of factor indices to retain (order preserved ascending)
    """
    m = as_array(m)
    dims = [int(x) for x in dims]
    n = len(dims)
    total = int(np.prod(dims))
    if m.shape != (total, total):
        raise ValueError(f"matrix shape {m.shape} inconsistent with dims {dims}")
    keep = sorted(set(int(i) for i in keep))
    if any(i < 0 or i >= n for i in keep):
        raise ValueError(f"keep indices {keep} out of range for {n} factors")
    a = m.reshape(dims + dims)
    row = list(range(n))
    col = [n + i for i in range(n)]
    for i in range(n):
        if i not in keep:
            col[i] = row[i]
    out_idx = [row[i] for i in keep] + [col[i] for i in keep]
    kept_dim = int(np.prod([dims[i] for i in keep])) if keep else 1
    return np.einsum(a, row + col, out_idx).reshape(kept_dim, kept_dim)


def schatten_norm(m, p) -> float:
    """Schatten p-norm for p in {1, 2, inf} of a square matrix."""
    m = as_array(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("schatten_norm expects a square matrix")
    if p == 2:
        return float(np.linalg.norm(m))
    s = np.linalg.svd(m, compute_uv=False)
    if p == 1:
        return float(s.sum())
    if p in (np.inf, float("inf"), "inf"):
        return float(s.max()) if s.size else 0.0
    raise ValueError("p must be 1, 2, or inf")


def trace_distance(a, b) -> float:
    return schatten_norm(as_array(a) - as_array(b), 1)


def helstrom_measurement(a, b):
    """Optimal equal-prior two-state discrimination.

    Returns ``(projector, success_prob)`` where the projector spans the
    nonnegative eigenspace of ``a - b`` and
    ``success_prob = 1/2 + ||a - b||_1 / 4``.
    """
    a = as_array(a)
    b = as_array(b)
    if a.shape != b.shape:
        raise ValueError("states must have equal dimensions")
    diff = a - b
    evals, vecs = np.linalg.eigh((diff + diff.conj().T) / 2)
    pos = vecs[:, evals >= 0]
    projector = pos @ pos.conj().T
    success = 0.5 + 0.25 * np.abs(evals).sum()
    return projector, float(success)


def random_hermitian(d: int, rng) -> np.ndarray:
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return (g + g.conj().T) / 2


def random_pure_state(d: int, rng) -> PureState:
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return PureState(v / np.linalg.norm(v))


def apply_single_site(op: np.ndarray, vec: np.ndarray, site: int, k: int, d: int) -> np.ndarray:
    """Apply a d x d operator to one tensor slot of a vector on (C^d)^k."""
    t = vec.reshape((d,) * k)
    t = np.tensordot(op, t, axes=([1], [site]))
    # tensordot puts the contracted axis first; restore slot order
    t = np.moveaxis(t, 0, site)
    return t.reshape(-1)


def tensor_power_quadratic_form(op: np.ndarray, psi: np.ndarray, k: int) -> complex:
    """<psi| op^{tensor k} |psi> without materializing the k-fold operator."""
    d = op.shape[0]
    phi = psi
    for site in range(k):
        phi = apply_single_site(op, phi, site, k, d)
    return complex(np.vdot(psi, phi))
