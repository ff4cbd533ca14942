"""Adaptive k-replica measurement strategies as explicit finite trees.

A strategy of depth N measures, at each node, a rank-1 POVM
``{w_v d^k |psi_v><psi_v|}_v`` on a fresh batch of k state copies; the
transcript is the root-to-leaf outcome path. Under the maximally mixed state
the conditional outcome law at every node is just the weight vector, which
makes every statistical quantity here exactly computable by enumeration.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .linalg import (
    ResourceBudgetError,
    as_array,
    check_allocation,
    tensor_power_quadratic_form,
)

POVM_COMPLETENESS_TOL = 1e-8
DEFAULT_BRANCHING_CAP = 16
DEFAULT_DEPTH_CAP = 6


class PovmValidationError(ValueError):
    def __init__(self, residual: float):
        super().__init__(f"POVM completeness residual {residual:.3e} exceeds tolerance")
        self.residual = residual


@dataclass(frozen=True)
class PovmOutcome:
    """One rank-1 POVM element w * dim * |psi><psi| in weight/vector form."""

    weight: float
    vector: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=complex).reshape(-1)
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)
        if self.weight <= 0:
            raise ValueError("POVM weights must be positive")


def validate_povm(outcomes, dim: int, tol: float = POVM_COMPLETENESS_TOL) -> None:
    """Assert sum_v w_v dim |psi_v><psi_v| = identity within tolerance."""
    acc = np.zeros((dim, dim), dtype=complex)
    for out in outcomes:
        v = out.vector
        if v.shape[0] != dim:
            raise ValueError(f"outcome vector dimension {v.shape[0]} != {dim}")
        acc += out.weight * dim * np.outer(v, v.conj())
    residual = float(np.linalg.norm(acc - np.eye(dim)))
    if residual > tol:
        raise PovmValidationError(residual)


def refine_povm(elements, tol: float = POVM_COMPLETENESS_TOL):
    """Split general PSD POVM elements into rank-1 outcomes.

    Returns a list of (PovmOutcome, parent_index) pairs whose grouped sums
    reproduce each input element. Eigenvalues below 1e-12 are dropped.
    """
    elements = [as_array(e) for e in elements]
    dim = elements[0].shape[0]
    total = sum(elements)
    if np.linalg.norm(total - np.eye(dim)) > tol:
        raise ValueError("POVM elements do not sum to the identity")
    outcomes = []
    for parent, el in enumerate(elements):
        if np.abs(el - el.conj().T).max() > 1e-10:
            raise ValueError(f"element {parent} is not Hermitian")
        evals, vecs = np.linalg.eigh(el)
        if evals.min() < -1e-9:
            raise ValueError(f"element {parent} has negative eigenvalue {evals.min():.3e}")
        for lam, vec in zip(evals, vecs.T):
            if lam > 1e-12:
                outcomes.append((PovmOutcome(weight=float(lam) / dim, vector=vec), parent))
    return outcomes


@dataclass(frozen=True)
class PovmNode:
    """Explicit tree node: outcomes plus one child node per outcome.

    ``children`` is None at the last measurement round, otherwise a tuple
    aligned with ``outcomes``.
    """

    outcomes: tuple
    children: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "outcomes", tuple(self.outcomes))
        if self.children is not None:
            children = tuple(self.children)
            if len(children) != len(self.outcomes):
                raise ValueError("children must align with outcomes")
            object.__setattr__(self, "children", children)


class StrategyTree:
    """Depth-N strategy; the POVM at a node is a function of the path to it.

    ``povm_fn(path) -> list[PovmOutcome]`` receives the tuple of outcome
    indices leading to the node. Nonadaptive strategies depend only on
    ``len(path)``; the dedicated constructor enforces and records that.
    POVMs are memoized per path.
    """

    def __init__(self, k: int, d: int, depth: int, povm_fn, nonadaptive: bool = False,
                 branching_cap: int = DEFAULT_BRANCHING_CAP, validate: bool = True):
        if depth < 1:
            raise ValueError("depth must be at least 1")
        self.k = int(k)
        self.d = int(d)
        self.depth = int(depth)
        self.dim = self.d**self.k
        self._povm_fn = povm_fn
        self.nonadaptive = bool(nonadaptive)
        self.branching_cap = int(branching_cap)
        self._validate = bool(validate)
        self._cache: dict = {}

    @classmethod
    def from_depth_povms(cls, k: int, d: int, povms, **kw) -> "StrategyTree":
        povms = [list(p) for p in povms]
        return cls(k, d, len(povms), lambda path: povms[len(path)], nonadaptive=True, **kw)

    @classmethod
    def from_builder(cls, k: int, d: int, depth: int, builder, **kw) -> "StrategyTree":
        return cls(k, d, depth, builder, nonadaptive=False, **kw)

    @classmethod
    def from_root(cls, k: int, d: int, root: PovmNode, **kw) -> "StrategyTree":
        depth = 1
        node = root
        while node.children is not None:
            depth += 1
            node = node.children[0]

        def povm_fn(path):
            node = root
            for idx in path:
                node = node.children[idx]
            return list(node.outcomes)

        return cls(k, d, depth, povm_fn, nonadaptive=False, **kw)

    def povm(self, path: tuple) -> list:
        key = len(path) if self.nonadaptive else path
        if key not in self._cache:
            outcomes = list(self._povm_fn(path))
            if len(outcomes) > self.branching_cap:
                raise ResourceBudgetError(
                    f"node branching {len(outcomes)} exceeds cap {self.branching_cap}"
                )
            if self._validate:
                validate_povm(outcomes, self.dim)
            self._cache[key] = outcomes
        return self._cache[key]

    def nodes_at_depth(self, t: int):
        """All depth-t paths with their null-hypothesis probabilities p^t_0."""
        level = {(): 1.0}
        for _ in range(t):
            nxt = {}
            for path, prob in level.items():
                for idx, out in enumerate(self.povm(path)):
                    nxt[path + (idx,)] = prob * out.weight
            level = nxt
        return level

    def node_vectors(self):
        """All measurement vectors appearing anywhere in the tree."""
        if self.nonadaptive:
            vecs = []
            for t in range(self.depth):
                vecs.extend(out.vector for out in self.povm((0,) * t))
            return vecs
        vecs = []
        stack = [()]
        while stack:
            path = stack.pop()
            if len(path) == self.depth:
                continue
            outcomes = self.povm(path)
            vecs.extend(out.vector for out in outcomes)
            stack.extend(path + (i,) for i in range(len(outcomes)))
        return vecs

    def to_json(self) -> str:
        """Serialize by materializing every node (explicit trees only)."""
        def node_doc(path):
            outcomes = self.povm(path)
            doc = []
            for idx, out in enumerate(outcomes):
                entry = {
                    "weight": out.weight,
                    "vector": [[float(z.real), float(z.imag)] for z in out.vector],
                }
                if len(path) + 1 < self.depth:
                    entry["child"] = node_doc(path + (idx,))
                doc.append(entry)
            return doc

        return json.dumps(
            {"k": self.k, "d": self.d, "depth": self.depth,
             "nonadaptive": self.nonadaptive, "root": node_doc(())},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "StrategyTree":
        doc = json.loads(text)
        k, d, depth = doc["k"], doc["d"], doc["depth"]

        def parse(node_doc):
            outcomes = []
            children = []
            for entry in node_doc:
                vec = np.array([complex(re, im) for re, im in entry["vector"]])
                outcomes.append(PovmOutcome(weight=entry["weight"], vector=vec))
                children.append(parse(entry["child"]) if "child" in entry else None)
            return outcomes, children

        root = parse(doc["root"])

        def povm_fn(path):
            node = root
            for idx in path:
                node = node[1][idx]
            return node[0]

        return cls(k, d, depth, povm_fn, nonadaptive=doc.get("nonadaptive", False))


# ---------------------------------------------------------------------------
# POVM constructors

def basis_povm(dim: int, basis: np.ndarray | None = None) -> list:
    """Rank-1 POVM from an orthonormal basis (columns); uniform weights 1/dim."""
    if basis is None:
        basis = np.eye(dim, dtype=complex)
    return [PovmOutcome(weight=1.0 / dim, vector=basis[:, i]) for i in range(dim)]


def haar_basis_povm(dim: int, rng) -> list:
    from .weingarten import haar_sample

    return basis_povm(dim, haar_sample(dim, rng))


def mixed_basis_povm(dim: int, rng, mix: float | None = None) -> list:
    """Convex mix of two random basis POVMs; gives unequal weights."""
    from .weingarten import haar_sample

    c = float(rng.uniform(0.2, 0.8)) if mix is None else mix
    b1, b2 = haar_sample(dim, rng), haar_sample(dim, rng)
    out = [PovmOutcome(weight=c / dim, vector=b1[:, i]) for i in range(dim)]
    out += [PovmOutcome(weight=(1 - c) / dim, vector=b2[:, i]) for i in range(dim)]
    return out


def standard_tree(k: int, d: int, depth: int) -> StrategyTree:
    """Nonadaptive strategy measuring the computational basis every round."""
    povm = basis_povm(d**k)
    return StrategyTree.from_depth_povms(k, d, [povm] * depth)


def random_tree(k: int, d: int, depth: int, rng, adaptive: bool = True,
                branching_cap: int = DEFAULT_BRANCHING_CAP) -> StrategyTree:
    """Random strategy with a Haar basis POVM at every node (or depth)."""
    dim = d**k
    if dim > branching_cap:
        raise ResourceBudgetError(f"rank-1 POVMs need at least {dim} outcomes > cap {branching_cap}")
    if not adaptive:
        povms = [haar_basis_povm(dim, rng) for _ in range(depth)]
        return StrategyTree.from_depth_povms(k, d, povms, branching_cap=branching_cap)
    seed_root = int(rng.integers(0, 2**63 - 1))

    def builder(path):
        node_rng = np.random.default_rng(np.random.SeedSequence(seed_root, spawn_key=path))
        return haar_basis_povm(dim, node_rng)

    return StrategyTree.from_builder(k, d, depth, builder, branching_cap=branching_cap)


# ---------------------------------------------------------------------------
# Transcript distributions

@dataclass(frozen=True)
class TranscriptDistribution:
    """Exact probability vector over depth-N transcripts (outcome paths)."""

    probs: dict

    def __post_init__(self):
        total = sum(self.probs.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"transcript probabilities sum to {total}, not 1")
        if min(self.probs.values(), default=0.0) < -1e-12:
            raise ValueError("negative transcript probability")

    def aligned(self, other: "TranscriptDistribution"):
        if set(self.probs) != set(other.probs):
            raise ValueError("transcript distributions live on different outcome spaces")
        keys = sorted(self.probs)
        p = np.array([self.probs[k] for k in keys])
        q = np.array([other.probs[k] for k in keys])
        return keys, p, q

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["path", "probability"])
            for key in sorted(self.probs):
                writer.writerow(["/".join(map(str, key)), repr(self.probs[key])])


def outcome_probabilities(outcomes, rho: np.ndarray, k: int, d: int) -> np.ndarray:
    """Conditional law p(v|u) = w_v d^k <psi_v| rho^{k} |psi_v> at one node."""
    dim = d**k
    probs = np.empty(len(outcomes))
    for i, out in enumerate(outcomes):
        val = tensor_power_quadratic_form(rho, out.vector, k).real
        probs[i] = out.weight * dim * val
    return probs


def transcript_distribution(tree: StrategyTree, rho) -> TranscriptDistribution:
    """Exact transcript law under ``rho`` by recursion from the root."""
    rho = as_array(rho)
    check_allocation(tree.dim * len(tree.povm(())) * tree.depth)
    probs: dict = {}

    def walk(path, acc):
        if len(path) == tree.depth:
            probs[path] = acc
            return
        outcomes = tree.povm(path)
        cond = outcome_probabilities(outcomes, rho, tree.k, tree.d)
        for idx, p in enumerate(cond):
            walk(path + (idx,), acc * p)

    walk((), 1.0)
    return TranscriptDistribution(probs=probs)


def null_distribution(tree: StrategyTree) -> TranscriptDistribution:
    """Transcript law under the maximally mixed state: products of weights."""
    probs: dict = {}

    def walk(path, acc):
        if len(path) == tree.depth:
            probs[path] = acc
            return
        for idx, out in enumerate(tree.povm(path)):
            walk(path + (idx,), acc * out.weight)

    walk((), 1.0)
    return TranscriptDistribution(probs=probs)


def mixture_transcript_distribution(tree: StrategyTree, members, n_samples: int = 0,
                                    rng=None):
    """Average transcript law over a state ensemble.

    ``members`` is either a list of (weight, rho) pairs, averaged exactly, or
    a callable sampler ``members(rng) -> rho`` used with ``n_samples`` draws,
    in which case a (distribution, stderr-by-path) pair is returned.
    """
    if callable(members):
        if n_samples <= 0 or rng is None:
            raise ValueError("sampler form needs n_samples and rng")
        acc: dict = {}
        acc2: dict = {}
        for _ in range(n_samples):
            dist = transcript_distribution(tree, members(rng))
            for key, p in dist.probs.items():
                acc[key] = acc.get(key, 0.0) + p
                acc2[key] = acc2.get(key, 0.0) + p * p
        probs = {k: v / n_samples for k, v in acc.items()}
        stderr = {
            k: np.sqrt(max(acc2[k] / n_samples - probs[k] ** 2, 0.0) / n_samples)
            for k in acc
        }
        return TranscriptDistribution(probs=probs), stderr
    members = list(members)
    total_w = sum(w for w, _ in members)
    if abs(total_w - 1.0) > 1e-9:
        raise ValueError("ensemble weights must sum to 1")
    probs = {}
    for w, rho in members:
        dist = transcript_distribution(tree, rho)
        for key, p in dist.probs.items():
            probs[key] = probs.get(key, 0.0) + w * p
    return TranscriptDistribution(probs=probs)


# ---------------------------------------------------------------------------
# Likelihood perturbations

def delta_perturbation(psi: np.ndarray, u, epsilon: float, k: int) -> float:
    """<psi| (d rho_U)^{k} - 1 |psi> for rho_U = (I + eps U Z U+)/d.

    This is the relative perturbation of one outcome probability against the
    maximally mixed null.
    """
    from .circuits import pauli_z_n

    u = as_array(u)
    d = u.shape[0]
    z = pauli_z_n(int(np.log2(d))).matrix
    m = np.eye(d) + epsilon * (u @ z @ u.conj().T)
    return float(tensor_power_quadratic_form(m, np.asarray(psi), k).real - 1.0)


def node_deltas(outcomes, u, epsilon: float, k: int) -> np.ndarray:
    return np.array([delta_perturbation(out.vector, u, epsilon, k) for out in outcomes])


def likelihood_ratio(tree: StrategyTree, path: tuple, u, epsilon: float) -> float:
    """Product of (1 + delta) along the root-to-node path."""
    ratio = 1.0
    for t in range(len(path)):
        outcomes = tree.povm(path[:t])
        ratio *= 1.0 + delta_perturbation(outcomes[path[t]].vector, u, epsilon, tree.k)
    return ratio


def mean_likelihood_ratio(tree: StrategyTree, path: tuple, members, epsilon: float) -> float:
    """Ensemble-averaged likelihood ratio L(u) over rotation members."""
    return float(np.mean([likelihood_ratio(tree, path, u, epsilon) for u in members]))


def pairwise_correlation(outcomes, u, v, epsilon: float, k: int) -> float:
    """p0-weighted inner product of the perturbations of two rotations."""
    du = node_deltas(outcomes, u, epsilon, k)
    dv = node_deltas(outcomes, v, epsilon, k)
    w = np.array([out.weight for out in outcomes])
    return float((w * du * dv).sum())


# ---------------------------------------------------------------------------
# Divergences and decision bounds

def tv_distance(p: TranscriptDistribution, q: TranscriptDistribution) -> float:
    _, a, b = p.aligned(q)
    return float(0.5 * np.abs(a - b).sum())


def kl_divergence(p: TranscriptDistribution, q: TranscriptDistribution) -> float:
    _, a, b = p.aligned(q)
    mask = a > 0
    if np.any(b[mask] <= 0):
        raise ValueError("KL undefined: q vanishes on the support of p")
    return float((a[mask] * np.log(a[mask] / b[mask])).sum())


def chi_squared(p: TranscriptDistribution, q: TranscriptDistribution) -> float:
    _, a, b = p.aligned(q)
    if np.any(b <= 0):
        raise ValueError("chi-squared undefined: q must be strictly positive")
    return float(((a - b) ** 2 / b).sum())


@dataclass(frozen=True)
class LeCamReport:
    error_sum: float
    tv: float
    bound: float  # 1 - tv
    holds: bool


def lecam_check(p0: TranscriptDistribution, p1: TranscriptDistribution, decision) -> LeCamReport:
    """Error sum of a binary decision rule against the two-point bound.

    ``decision`` maps transcripts to 0/1. Reports err0 + err1 and checks it is
    at least 1 - TV(p0, p1).
    """
    keys, a, b = p0.aligned(p1)
    err0 = sum(a[i] for i, k in enumerate(keys) if decision[k] == 1)
    err1 = sum(b[i] for i, k in enumerate(keys) if decision[k] == 0)
    tv = float(0.5 * np.abs(a - b).sum())
    total = float(err0 + err1)
    return LeCamReport(error_sum=total, tv=tv, bound=1.0 - tv, holds=total >= 1.0 - tv - 1e-12)


def likelihood_ratio_floor_check(p: TranscriptDistribution, q: TranscriptDistribution,
                                 delta: float) -> bool:
    """If p/q > 1 - delta pointwise, verify TV(p, q) <= delta.

    Returns whether the pointwise premise held; raises SelfCheckError if the
    premise holds but the conclusion fails (which would indicate a bug).
    """
    from .linalg import SelfCheckError

    _, a, b = p.aligned(q)
    if np.any(b <= 0):
        premise = False
    else:
        premise = bool(np.all(a / b > 1.0 - delta))
    if premise:
        tv = float(0.5 * np.abs(a - b).sum())
        if tv > delta + 1e-12:
            raise SelfCheckError(f"floor premise held but TV {tv} > delta {delta}")
    return premise


def ml_decision(p0: TranscriptDistribution, p1: TranscriptDistribution) -> dict:
    """Maximum-likelihood rule: decide 1 where p1 exceeds p0."""
    keys, a, b = p0.aligned(p1)
    return {k: (1 if b[i] > a[i] else 0) for i, k in enumerate(keys)}
