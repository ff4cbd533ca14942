"""State families and circuit ensembles.

Uniform Clifford sampling works on the symplectic side: the images of the 2n
Pauli generators are drawn uniformly among valid (anti)commuting completions
by GF(2) linear algebra, signs are uniform bits, and the dense unitary is
synthesized from the sampled tableau. Correctness is established by moment
tests rather than trusted (see the test suite).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .linalg import DensityMatrix, UnitaryMatrix, as_array
from .weingarten import haar_sample

PAULI_1Q = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

MAX_QUBITS_DENSE_CLIFFORD = 6
MAX_QUBITS_Z = 10


def pauli_z_n(n: int) -> UnitaryMatrix:
    """Z^{tensor n}: diagonal with entry (-1)^popcount(index)."""
    if not 1 <= n <= MAX_QUBITS_Z:
        raise ValueError(f"n must be in 1..{MAX_QUBITS_Z}")
    idx = np.arange(2**n)
    signs = (-1.0) ** np.array([bin(i).count("1") for i in idx])
    return UnitaryMatrix(np.diag(signs.astype(complex)))


def canonical_phase(u: np.ndarray) -> np.ndarray:
    """Rotate the global phase so the first nonzero entry of the first
    nonzero column is real positive."""
    u = np.asarray(u, dtype=complex)
    for col in range(u.shape[1]):
        column = u[:, col]
        nz = np.nonzero(np.abs(column) > 1e-12)[0]
        if nz.size:
            pivot = column[nz[0]]
            return u * (abs(pivot) / pivot)
    return u


# ---------------------------------------------------------------------------
# GF(2) machinery for the symplectic sampler

def _gf2_rref(a: np.ndarray):
    """Reduced row echelon form over GF(2); returns (rref, pivot_columns)."""
    a = a.copy() % 2
    rows, cols = a.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r >= rows:
            break
        piv = np.nonzero(a[r:, c])[0]
        if piv.size == 0:
            continue
        piv = piv[0] + r
        a[[r, piv]] = a[[piv, r]]
        other = np.nonzero(a[:, c])[0]
        for o in other:
            if o != r:
                a[o] ^= a[r]
        pivots.append(c)
        r += 1
    return a, pivots


def gf2_nullspace(a: np.ndarray) -> np.ndarray:
    """Basis (rows) of the GF(2) nullspace of ``a``."""
    rows, cols = a.shape
    if rows == 0:
        return np.eye(cols, dtype=np.uint8)
    rref, pivots = _gf2_rref(a.astype(np.uint8))
    free = [c for c in range(cols) if c not in pivots]
    basis = []
    for f in free:
        v = np.zeros(cols, dtype=np.uint8)
        v[f] = 1
        for r, p in enumerate(pivots):
            if rref[r, f]:
                v[p] = 1
        basis.append(v)
    return np.array(basis, dtype=np.uint8) if basis else np.zeros((0, cols), dtype=np.uint8)


def gf2_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """One particular solution of a x = b over GF(2); raises if infeasible."""
    rows, cols = a.shape
    aug = np.concatenate([a.astype(np.uint8), b.reshape(-1, 1).astype(np.uint8)], axis=1)
    rref, pivots = _gf2_rref(aug)
    for r in range(rows):
        if not rref[r, :cols].any() and rref[r, cols]:
            raise ValueError("inconsistent GF(2) system")
    x = np.zeros(cols, dtype=np.uint8)
    for r, p in enumerate(pivots):
        if p < cols:
            x[p] = rref[r, cols]
    return x


def _symplectic_dot(v: np.ndarray, w: np.ndarray, n: int) -> int:
    return int((v[:n] @ w[n:] + v[n:] @ w[:n]) % 2)


def _pauli_matrix(n: int, xz: np.ndarray, sign: int) -> np.ndarray:
    """Hermitian Pauli for the symplectic vector (x | z) with sign bit."""
    mats = []
    for q in range(n):
        x, z = int(xz[q]), int(xz[n + q])
        m = PAULI_1Q["I"]
        if x and z:
            m = PAULI_1Q["Y"]
        elif x:
            m = PAULI_1Q["X"]
        elif z:
            m = PAULI_1Q["Z"]
        mats.append(m)
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return -out if sign else out


def _sample_in_span(basis: np.ndarray, rng, nonzero: bool) -> np.ndarray:
    """Uniform element of the row span; optionally conditioned nonzero."""
    k = basis.shape[0]
    while True:
        coeff = rng.integers(0, 2, size=k).astype(np.uint8)
        v = (coeff @ basis) % 2
        if not nonzero or v.any():
            return v.astype(np.uint8)


def sample_clifford_tableau(n: int, rng):
    """Uniform symplectic images plus uniform sign bits for the 2n generators.

    Returns (x_images, z_images, x_signs, z_signs) where images are rows in
    F_2^{2n} ordered X_1..X_n, Z_1..Z_n.
    """
    two_n = 2 * n
    chosen: list[np.ndarray] = []
    x_imgs, z_imgs = [], []
    sym = np.zeros((two_n, two_n), dtype=np.uint8)  # J v for chosen vectors
    for i in range(n):
        # x-image: commutes with everything chosen so far
        constraints = np.array(
            [np.concatenate([v[n:], v[:n]]) for v in chosen], dtype=np.uint8
        ).reshape(len(chosen), two_n)
        basis = gf2_nullspace(constraints)
        v = _sample_in_span(basis, rng, nonzero=True)
        # z-image: commutes with chosen, anticommutes with v
        constraints2 = np.concatenate(
            [constraints, np.concatenate([v[n:], v[:n]]).reshape(1, two_n)], axis=0
        )
        target = np.zeros(len(chosen) + 1, dtype=np.uint8)
        target[-1] = 1
        particular = gf2_solve(constraints2, target)
        hom = gf2_nullspace(constraints2)
        w = (particular + _sample_in_span(hom, rng, nonzero=False)) % 2
        chosen.extend([v, w])
        x_imgs.append(v)
        z_imgs.append(w)
    x_signs = rng.integers(0, 2, size=n)
    z_signs = rng.integers(0, 2, size=n)
    return x_imgs, z_imgs, x_signs, z_signs


def _synthesize_from_tableau(n: int, x_imgs, z_imgs, x_signs, z_signs) -> np.ndarray:
    """Dense unitary with U X_i U+ = P_i and U Z_i U+ = Q_i.

    Column x of U is prod_i P_i^{x_i} |psi0> where |psi0> is the joint +1
    eigenvector of the Q_i.
    """
    d = 2**n
    q_mats = [_pauli_matrix(n, z_imgs[i], int(z_signs[i])) for i in range(n)]
    p_mats = [_pauli_matrix(n, x_imgs[i], int(x_signs[i])) for i in range(n)]
    proj = np.eye(d, dtype=complex)
    for q in q_mats:
        proj = proj @ (np.eye(d) + q) / 2
    psi0 = None
    for col in range(d):
        cand = proj[:, col]
        nrm = np.linalg.norm(cand)
        if nrm > 1e-8:
            psi0 = cand / nrm
            break
    if psi0 is None:
        raise RuntimeError("stabilizer projector vanished; invalid tableau")
    u = np.empty((d, d), dtype=complex)
    for x in range(d):
        vec = psi0
        for i in range(n):
            if (x >> (n - 1 - i)) & 1:  # qubit 0 is the most significant bit
                vec = p_mats[i] @ vec
        u[:, x] = vec
    return canonical_phase(u)


def sample_clifford(n: int, rng) -> UnitaryMatrix:
    """One uniformly random n-qubit Clifford as a dense matrix, phase-canonical."""
    if not 1 <= n <= MAX_QUBITS_DENSE_CLIFFORD:
        raise ValueError(f"dense Clifford synthesis supports n in 1..{MAX_QUBITS_DENSE_CLIFFORD}")
    x_imgs, z_imgs, x_signs, z_signs = sample_clifford_tableau(n, rng)
    return UnitaryMatrix(_synthesize_from_tableau(n, x_imgs, z_imgs, x_signs, z_signs))


def default_v_gate() -> UnitaryMatrix:
    """The T gate; verified non-Clifford on construction."""
    t = np.diag([1.0, np.exp(1j * np.pi / 4)]).astype(complex)
    if is_clifford_1q(t):
        raise RuntimeError("default interleaving gate unexpectedly normalizes the Pauli group")
    return UnitaryMatrix(t)


def is_clifford_1q(u: np.ndarray, tol: float = 1e-9) -> bool:
    """Does u conjugate X and Z into signed Paulis?"""
    u = as_array(u)
    signed_paulis = [s * PAULI_1Q[p] for p in "IXYZ" for s in (1, -1, 1j, -1j)]
    for gen in ("X", "Z"):
        conj = u @ PAULI_1Q[gen] @ u.conj().T
        if not any(np.abs(conj - sp).max() < tol for sp in signed_paulis):
            return False
    return True


def clifford_group_1q() -> list:
    """The 24 single-qubit Cliffords mod phase, in canonical phase form."""
    h = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
    s = np.diag([1.0, 1j]).astype(complex)
    seen = {}
    frontier = [canonical_phase(np.eye(2, dtype=complex))]
    while frontier:
        u = frontier.pop()
        key = tuple(np.round(u, 8).ravel().tolist())
        if key in seen:
            continue
        seen[key] = u
        for g in (h, s):
            frontier.append(canonical_phase(g @ u))
    mats = list(seen.values())
    if len(mats) != 24:
        raise RuntimeError(f"single-qubit Clifford closure produced {len(mats)} elements")
    return mats


def match_clifford_1q(u: np.ndarray, group: list, tol: float = 1e-8) -> int:
    """Index of u in the canonical 24-element list, matching mod phase."""
    cu = canonical_phase(as_array(u))
    for i, g in enumerate(group):
        if np.abs(cu - g).max() < tol:
            return i
    raise ValueError("matrix is not a single-qubit Clifford")


def sample_interleaved(n: int, depth: int, v_gate, rng) -> UnitaryMatrix:
    """Random interleaved circuit: product chi_D xi_D ... chi_1 xi_1.

    Each xi_i is uniform over {V on the top wire, V+ on the top wire,
    identity}; each chi_i is an independent uniform Clifford. depth 0 gives
    the identity.
    """
    if not 1 <= n <= MAX_QUBITS_DENSE_CLIFFORD:
        raise ValueError(f"n must be in 1..{MAX_QUBITS_DENSE_CLIFFORD}")
    d = 2**n
    v = as_array(v_gate)
    eye_rest = np.eye(2 ** (n - 1), dtype=complex)
    xis = [
        np.kron(v, eye_rest),
        np.kron(v.conj().T, eye_rest),
        np.eye(d, dtype=complex),
    ]
    out = np.eye(d, dtype=complex)
    for _ in range(depth):
        xi = xis[int(rng.integers(0, 3))]
        chi = sample_clifford(n, rng).matrix
        out = chi @ xi @ out
    return UnitaryMatrix(canonical_phase(out))


@dataclass(frozen=True)
class StateFamilyMember:
    """rho = (I + eps U Z U+)/d with its defining rotation and strength."""

    u: UnitaryMatrix
    epsilon: float
    rho: DensityMatrix

    def __post_init__(self):
        d = self.u.dim
        z = pauli_z_n(int(np.log2(d))).matrix
        target = (np.eye(d) + self.epsilon * (self.u.matrix @ z @ self.u.matrix.conj().T)) / d
        if np.abs(target - self.rho.matrix).max() > 1e-10:
            raise ValueError("rho does not match (I + eps U Z U+)/d")
        evals = np.sort(self.rho.eigenvalues())
        lo, hi = (1 - self.epsilon) / d, (1 + self.epsilon) / d
        expected = np.sort(np.array([lo] * (d // 2) + [hi] * (d // 2)))
        if np.abs(evals - expected).max() > 1e-9:
            raise ValueError("spectrum is not {(1 +- eps)/d} with equal multiplicity")


def build_state(u, epsilon: float) -> StateFamilyMember:
    """Construct the rotated two-point-spectrum state (I + eps U Z U+)/d."""
    if not 0 <= epsilon <= 1:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    u = u if isinstance(u, UnitaryMatrix) else UnitaryMatrix(as_array(u))
    d = u.dim
    n = int(np.log2(d))
    if 2**n != d:
        raise ValueError(f"dimension {d} is not a power of 2")
    z = pauli_z_n(n).matrix
    rho = (np.eye(d) + epsilon * (u.matrix @ z @ u.matrix.conj().T)) / d
    rho = (rho + rho.conj().T) / 2
    return StateFamilyMember(u=u, epsilon=float(epsilon), rho=DensityMatrix(rho))


@dataclass(frozen=True)
class CircuitEnsemble:
    """A sampleable distribution over d x d unitaries.

    kinds: "haar", "clifford", "interleaved". Interleaved circuits of depth 0
    are the point mass at the identity.
    """

    kind: str
    n_qubits: int
    depth: int = 0
    v_name: str = "T"
    v_matrix: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("haar", "clifford", "interleaved"):
            raise ValueError(f"unknown ensemble kind {self.kind!r}")
        if self.kind == "interleaved" and self.v_matrix is None:
            object.__setattr__(self, "v_matrix", default_v_gate().matrix)

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    def sample(self, rng) -> np.ndarray:
        if self.kind == "haar":
            return haar_sample(self.dim, rng)
        if self.kind == "clifford":
            return sample_clifford(self.n_qubits, rng).matrix
        return sample_interleaved(self.n_qubits, self.depth, self.v_matrix, rng).matrix

    def sample_members(self, count: int, rng) -> list:
        return [self.sample(rng) for _ in range(count)]

    def to_json(self, seed=None) -> str:
        doc = {"kind": self.kind, "n": self.n_qubits}
        if self.kind == "interleaved":
            doc["depth"] = self.depth
            doc["v"] = self.v_name
        if seed is not None:
            doc["seed"] = seed
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CircuitEnsemble":
        doc = json.loads(text)
        kind = doc["kind"]
        n = int(doc["n"])
        if kind == "interleaved":
            v = doc.get("v", "T")
            if isinstance(v, str):
                if v != "T":
                    raise ValueError(f"unknown named gate {v!r}")
                return cls(kind=kind, n_qubits=n, depth=int(doc["depth"]), v_name="T")
            vm = np.array([[complex(re, im) for re, im in row] for row in v])
            return cls(kind=kind, n_qubits=n, depth=int(doc["depth"]), v_name="custom", v_matrix=vm)
        return cls(kind=kind, n_qubits=n)
