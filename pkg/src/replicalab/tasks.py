"""Distinguishing tasks, exact bound machinery, and experiment harness.

Two tasks are modeled: deciding between the maximally mixed state and a
randomly rotated two-point-spectrum state drawn from a circuit ensemble, and
mixedness testing against the same rotated family as the hard alternative.
All inequality checks are evaluated exactly over declared finite
sub-ensembles of rotations, which the bounds permit.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from math import comb, sqrt

import numpy as np

from .circuits import CircuitEnsemble, build_state, pauli_z_n
from .linalg import (
    DensityMatrix,
    UnitaryMatrix,
    as_array,
    check_allocation,
    helstrom_measurement,
    maximally_mixed,
    partial_trace,
)
from .perms import enumerate_sym, trace_perm_bipartite
from .trees import (
    PovmOutcome,
    StrategyTree,
    TranscriptDistribution,
    basis_povm,
    chi_squared,
    kl_divergence,
    mixture_transcript_distribution,
    node_deltas,
    null_distribution,
    refine_povm,
    transcript_distribution,
)
from .weingarten import UnsupportedRegimeError, haar_sample, weingarten_table

PHI_REPLICA_CAP = 4
SECOND_MOMENT_REPLICA_CAP = 3


# ---------------------------------------------------------------------------
# Task instances

@dataclass(frozen=True)
class TaskInstance:
    """A distinguishing problem: maximally mixed vs rotated alternative."""

    kind: str  # "rqc" or "mixedness"
    n_qubits: int
    k: int
    epsilon: float
    ensemble: CircuitEnsemble
    n_rounds: int
    seed: int

    def __post_init__(self):
        if self.kind not in ("rqc", "mixedness"):
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.kind == "rqc" and self.epsilon > 1.0 / (3 * self.k) + 1e-12:
            raise ValueError(
                f"rotated-circuit task requires epsilon <= 1/(3k) = {1 / (3 * self.k):.4f}"
            )
        if not 0 <= self.epsilon <= 1:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.ensemble.n_qubits != self.n_qubits:
            raise ValueError("ensemble qubit count does not match task")

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    def null_state(self) -> DensityMatrix:
        return maximally_mixed(self.dim)

    def rotated_state(self, u) -> DensityMatrix:
        return build_state(u, self.epsilon).rho

    def sub_ensemble(self, size: int, rng, symmetrize: bool = True) -> list:
        """Declared finite list of rotations standing in for the ensemble.

        With symmetrize=True the list is closed under the half-space
        reflection, which the transcript TV bound requires of the mixing
        distribution.
        """
        members = self.ensemble.sample_members(size, rng)
        if symmetrize:
            members = symmetrize_rotations(members, self.dim)
        return members

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n": self.n_qubits,
            "k": self.k,
            "epsilon": self.epsilon,
            "ensemble": json.loads(self.ensemble.to_json()),
            "rounds": self.n_rounds,
            "seed": self.seed,
        }


def reflection_unitary(d: int) -> np.ndarray:
    """Block antidiagonal swap of the two half-spaces; conjugates Z to -Z."""
    half = d // 2
    t = np.zeros((d, d), dtype=complex)
    t[:half, half:] = np.eye(half)
    t[half:, :half] = np.eye(half)
    return t


def symmetrize_rotations(members, d: int) -> list:
    """Close a rotation list under right multiplication by the reflection.

    (U T) Z (U T)+ = -U Z U+, so the closed list is invariant under flipping
    the sign of the rotated observable, which the transcript TV bound
    requires of the mixing distribution.
    """
    t = reflection_unitary(d)
    out = [as_array(u) for u in members]
    return out + [u @ t for u in out]


# ---------------------------------------------------------------------------
# Perturbation operators and their second moments

@dataclass(frozen=True)
class PhiOperators:
    """Even and odd parts of (I + eps U Z U+)^{k} - I, grouped by subset parity."""

    k: int
    epsilon: float
    phi0: np.ndarray  # even nonempty subsets
    phi1: np.ndarray  # odd subsets


def _subset_tensor(m: np.ndarray, subset, k: int, d: int) -> np.ndarray:
    factors = [m if i in subset else np.eye(d, dtype=complex) for i in range(k)]
    out = factors[0]
    for f in factors[1:]:
        out = np.kron(out, f)
    return out


def build_phi_operators(u, epsilon: float, k: int) -> PhiOperators:
    """Materialize both parity sums of eps^|S| (U Z U+ on S, identity off S)."""
    if k > PHI_REPLICA_CAP:
        raise UnsupportedRegimeError(f"replica count {k} exceeds cap {PHI_REPLICA_CAP}")
    u = as_array(u)
    d = u.shape[0]
    check_allocation((d**k) ** 2 * 3)
    z = pauli_z_n(int(np.log2(d))).matrix
    m = u @ z @ u.conj().T
    dim = d**k
    phi0 = np.zeros((dim, dim), dtype=complex)
    phi1 = np.zeros((dim, dim), dtype=complex)
    for size in range(1, k + 1):
        for subset in itertools.combinations(range(k), size):
            term = (epsilon**size) * _subset_tensor(m, set(subset), k, d)
            if size % 2:
                phi1 += term
            else:
                phi0 += term
    return PhiOperators(k=k, epsilon=float(epsilon), phi0=phi0, phi1=phi1)


def subset_expectations(psi: np.ndarray, u, k: int) -> dict:
    """<psi| (U Z U+ on S, identity off S) |psi> for every nonempty subset S."""
    from .linalg import apply_single_site

    u = as_array(u)
    d = u.shape[0]
    z = pauli_z_n(int(np.log2(d))).matrix
    m = u @ z @ u.conj().T
    psi = np.asarray(psi)
    vals = {}
    # build up applications site by site: vectors indexed by subset
    applied = {(): psi}
    for site in range(k):
        new = {}
        for subset, vec in applied.items():
            new[subset] = vec
            new[subset + (site,)] = apply_single_site(m, vec, site, k, d)
        applied = new
    for subset, vec in applied.items():
        if subset:
            vals[subset] = float(np.vdot(psi, vec).real)
    return vals


def phi_quadratic_forms(psi: np.ndarray, u, epsilon: float, k: int):
    """(<psi|Phi0|psi>, <psi|Phi1|psi>) without materializing the operators."""
    vals = subset_expectations(psi, u, k)
    phi0 = sum(epsilon ** len(s) * v for s, v in vals.items() if len(s) % 2 == 0)
    phi1 = sum(epsilon ** len(s) * v for s, v in vals.items() if len(s) % 2 == 1)
    return float(phi0), float(phi1)


_even_cycle_weight_cache: dict = {}


def _even_cycle_weights(m: int, d: int) -> dict:
    """h(type tau) = sum_sigma w(sigma tau) d^{#sigma} [sigma has only even cycles]."""
    key = (m, d)
    if key not in _even_cycle_weight_cache:
        table = weingarten_table(m, d)
        perms = enumerate_sym(m)
        reps = {}
        for p in perms:
            reps.setdefault(p.cycle_type(), p)
        out = {}
        for typ, tau in reps.items():
            total = 0.0
            for sigma in perms:
                lengths = sigma.cycle_type()
                if any(ln % 2 for ln in lengths):
                    continue
                total += float(table.weight(sigma.compose(tau))) * d ** len(lengths)
            out[typ] = total
        _even_cycle_weight_cache[key] = out
    return _even_cycle_weight_cache[key]


def second_moment_exact(psi, epsilon: float, k: int, d: int, parity: str) -> float:
    """Exact Haar value of E[<psi|Phi_parity|psi>^2].

    Expands the square over subset pairs (S, S') and evaluates each pair's
    joint moment of degree m = |S| + |S'| as
    ``sum_{sigma,tau} w(sigma tau) tr(P_tau (rho_S x rho_S')) tr(P_sigma Z^m)``
    where rho_S is the reduction of |psi><psi| to the slots in S and the
    Z-trace is d^{#sigma} on even-cycle permutations, zero otherwise.
    """
    if parity not in ("odd", "even"):
        raise ValueError("parity must be 'odd' or 'even'")
    if k > SECOND_MOMENT_REPLICA_CAP:
        raise UnsupportedRegimeError(
            f"replica count {k} exceeds exact cap {SECOND_MOMENT_REPLICA_CAP}"
        )
    if d < 2 * k:
        raise UnsupportedRegimeError(f"need d >= 2k for the degree-2k table, got d={d}, k={k}")
    psi = np.asarray(psi).reshape(-1)
    want = 1 if parity == "odd" else 0
    subsets = [
        s
        for size in range(1, k + 1)
        for s in itertools.combinations(range(k), size)
        if size % 2 == want
    ]
    if not subsets:
        return 0.0
    rho = np.outer(psi, psi.conj())
    reductions = {s: partial_trace(rho, [d] * k, s) for s in subsets}
    total = 0.0
    for s1 in subsets:
        for s2 in subsets:
            m = len(s1) + len(s2)
            weights = _even_cycle_weights(m, d)
            left, right = reductions[s1], reductions[s2]
            contrib = 0.0
            for tau in enumerate_sym(m):
                h = weights[tau.cycle_type()]
                if h == 0.0:
                    continue
                contrib += h * trace_perm_bipartite(tau, left, right, d).real
            total += epsilon**m * contrib
    return float(total)


def second_moment_mc(psi, epsilon: float, k: int, parity: str, sampler, n_samples: int, rng):
    """Sample mean of <psi|Phi_parity|psi>^2 over ensemble draws, with stderr."""
    psi = np.asarray(psi).reshape(-1)
    vals = np.empty(n_samples)
    for i in range(n_samples):
        u = sampler(rng) if callable(sampler) else sampler.sample(rng)
        q0, q1 = phi_quadratic_forms(psi, u, epsilon, k)
        vals[i] = (q1 if parity == "odd" else q0) ** 2
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else 0.0


def second_moment_members(psi, epsilon: float, k: int, parity: str, members) -> float:
    """Exact E[<psi|Phi_parity|psi>^2] over a finite uniform rotation list."""
    psi = np.asarray(psi).reshape(-1)
    vals = []
    for u in members:
        q0, q1 = phi_quadratic_forms(psi, u, epsilon, k)
        vals.append((q1 if parity == "odd" else q0) ** 2)
    return float(np.mean(vals))


def tv_bound_rhs(tree: StrategyTree, epsilon: float, members=None, exact_haar: bool = False) -> float:
    """Transcript-distance bound 2 N max over node vectors of
    E[<psi|Phi1|psi>^2] + 2 E[<psi|Phi0|psi>^2]^(1/2).

    With ``members`` the expectations are exact averages over the finite
    rotation list, which must be reflection-closed for the bound to apply;
    with exact_haar=True they are exact Haar values.
    """
    if (members is None) == (not exact_haar):
        raise ValueError("provide exactly one of members / exact_haar")
    k, d = tree.k, tree.d
    worst = 0.0
    for psi in tree.node_vectors():
        if exact_haar:
            e_odd = second_moment_exact(psi, epsilon, k, d, "odd")
            e_even = second_moment_exact(psi, epsilon, k, d, "even")
        else:
            e_odd = second_moment_members(psi, epsilon, k, "odd", members)
            e_even = second_moment_members(psi, epsilon, k, "even", members)
        worst = max(worst, e_odd + 2.0 * sqrt(max(e_even, 0.0)))
    return 2.0 * tree.depth * worst


# ---------------------------------------------------------------------------
# Pairwise correlations (exact Haar means)

def phi_haar_mean(outcomes, epsilon: float, k: int, d: int) -> float:
    """Exact E_{U,V}[phi] for independent Haar rotations at one node.

    Only even subset sizes survive the single-rotation average; for k <= 3
    that is the pair subsets, handled by the degree-2 twirl of Z x Z.
    """
    from .designs import exact_haar_moment_apply
    from .linalg import tensor_power_quadratic_form

    if k > SECOND_MOMENT_REPLICA_CAP:
        raise UnsupportedRegimeError(f"replica count {k} exceeds cap {SECOND_MOMENT_REPLICA_CAP}")
    if k < 2:
        return 0.0
    z = pauli_z_n(int(np.log2(d))).matrix
    twirl_zz = exact_haar_moment_apply(2, np.kron(z, z), d)
    total = 0.0
    pair_subsets = list(itertools.combinations(range(k), 2))
    for out in outcomes:
        psi = out.vector
        mean_delta = 0.0
        for s in pair_subsets:
            # embed the twirled two-slot operator on slots s of k replicas
            val = _two_slot_expectation(twirl_zz, psi, s, k, d)
            mean_delta += (epsilon**2) * val
        total += out.weight * mean_delta**2
    return float(total)


def _two_slot_expectation(op2: np.ndarray, psi: np.ndarray, slots, k: int, d: int) -> float:
    """<psi| op2 on the two given slots, identity elsewhere |psi>."""
    t = psi.reshape((d,) * k)
    a, b = slots
    t2 = np.tensordot(op2.reshape(d, d, d, d), t, axes=([2, 3], [a, b]))
    t2 = np.moveaxis(t2, (0, 1), (a, b))
    return float(np.vdot(psi, t2.reshape(-1)).real)


def swap_eigenbasis_povm(d: int) -> list:
    """Orthonormal basis of (C^d)^2 made of swap eigenvectors.

    Saturates the pairwise-correlation decay: every vector has swap
    expectation +-1.
    """
    dim = d * d
    vecs = []
    for i in range(d):
        v = np.zeros(dim, dtype=complex)
        v[i * d + i] = 1.0
        vecs.append(v)
    for i in range(d):
        for j in range(i + 1, d):
            plus = np.zeros(dim, dtype=complex)
            plus[i * d + j] = plus[j * d + i] = 1 / np.sqrt(2)
            minus = np.zeros(dim, dtype=complex)
            minus[i * d + j] = 1 / np.sqrt(2)
            minus[j * d + i] = -1 / np.sqrt(2)
            vecs.extend([plus, minus])
    basis = np.stack(vecs, axis=1)
    return basis_povm(dim, basis)


# ---------------------------------------------------------------------------
# Strategy harness

@dataclass(frozen=True)
class SuccessReport:
    trials: int
    successes: int
    rate: float
    wilson_lo: float
    wilson_hi: float
    tv_bound: float | None = None
    tv_exact: float | None = None

    def to_json_dict(self) -> dict:
        doc = {
            "trials": self.trials,
            "successes": self.successes,
            "success_rate": round(self.rate, 8),
            "wilson_lo": round(self.wilson_lo, 8),
            "wilson_hi": round(self.wilson_hi, 8),
        }
        if self.tv_bound is not None:
            doc["tv_bound"] = round(self.tv_bound, 10)
        if self.tv_exact is not None:
            doc["tv_exact"] = round(self.tv_exact, 10)
        return doc


def wilson_interval(successes: int, trials: int, z: float = 1.96):
    if trials == 0:
        return 0.0, 1.0
    p = successes / trials
    denom = 1 + z**2 / trials
    center = (p + z**2 / (2 * trials)) / denom
    half = z * sqrt(p * (1 - p) / trials + z**2 / (4 * trials**2)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def _sample_from_distribution(dist: TranscriptDistribution, count: int, rng):
    keys = sorted(dist.probs)
    probs = np.array([dist.probs[key] for key in keys])
    probs = np.maximum(probs, 0)
    probs /= probs.sum()
    idx = rng.choice(len(keys), size=count, p=probs)
    return [keys[i] for i in idx]


def run_strategy(tree: StrategyTree, epsilon: float, members, trials: int, rng,
                 tv_bound: float | None = None) -> SuccessReport:
    """Monte Carlo success rate of the maximum-likelihood transcript rule.

    Each trial flips a fair hypothesis coin; the alternative draws a rotation
    uniformly from ``members``. Transcripts are sampled from the exact
    per-state transcript laws.
    """
    p0 = null_distribution(tree)
    per_member = [
        transcript_distribution(tree, build_state(UnitaryMatrix(as_array(u)), epsilon).rho.matrix)
        for u in members
    ]
    keys = sorted(p0.probs)
    p0_vec = np.array([p0.probs[key] for key in keys])
    p1_vec = np.mean([[dist.probs[key] for key in keys] for dist in per_member], axis=0)
    decide_1 = p1_vec > p0_vec
    key_index = {key: i for i, key in enumerate(keys)}

    coins = rng.integers(0, 2, size=trials)
    successes = 0
    # draw transcripts in batches per source distribution
    n_null = int((coins == 0).sum())
    null_paths = _sample_from_distribution(p0, n_null, rng) if n_null else []
    null_iter = iter(null_paths)
    alt_indices = rng.integers(0, len(members), size=trials)
    for trial in range(trials):
        if coins[trial] == 0:
            path = next(null_iter)
            guess = decide_1[key_index[path]]
            successes += 0 if guess else 1
        else:
            dist = per_member[alt_indices[trial]]
            path = _sample_from_distribution(dist, 1, rng)[0]
            guess = decide_1[key_index[path]]
            successes += 1 if guess else 0
    rate = successes / trials
    lo, hi = wilson_interval(successes, trials)
    mixture = TranscriptDistribution(probs={key: p1_vec[i] for i, key in enumerate(keys)})
    from .trees import tv_distance

    return SuccessReport(
        trials=trials,
        successes=successes,
        rate=rate,
        wilson_lo=lo,
        wilson_hi=hi,
        tv_bound=tv_bound,
        tv_exact=tv_distance(p0, mixture),
    )


def haar_basis_tree(k: int, d: int, depth: int, rng) -> StrategyTree:
    from .trees import haar_basis_povm

    povms = [haar_basis_povm(d**k, rng) for _ in range(depth)]
    return StrategyTree.from_depth_povms(k, d, povms)


def helstrom_batch_tree(k: int, d: int, depth: int, epsilon: float, members) -> StrategyTree:
    """Nonadaptive strategy measuring the refined batch Helstrom POVM between
    the k-replica null and the k-replica mixture each round."""
    null_k = np.eye(d**k, dtype=complex) / d**k
    mix = np.zeros_like(null_k)
    for u in members:
        rho = build_state(UnitaryMatrix(as_array(u)), epsilon).rho.matrix
        rk = rho
        for _ in range(k - 1):
            rk = np.kron(rk, rho)
        mix += rk / len(members)
    projector, _ = helstrom_measurement(mix, null_k)
    outcomes = [out for out, _parent in refine_povm([projector, np.eye(d**k) - projector])]
    return StrategyTree.from_depth_povms(k, d, [outcomes] * depth)


def greedy_adaptive_tree(k: int, d: int, depth: int, epsilon: float, members, seed: int,
                         pool_size: int = 3) -> StrategyTree:
    """Adaptive strategy: at each node, choose among candidate bases the one
    maximizing the posterior-weighted chi-squared of the next outcome law."""
    from .trees import haar_basis_povm, likelihood_ratio

    members = [as_array(u) for u in members]
    dim = d**k

    def builder(path):
        tree_ref = builder.tree  # set after construction
        weights = np.array(
            [likelihood_ratio(tree_ref, path, u, epsilon) for u in members]
        )
        weights = np.maximum(weights, 0)
        post = weights / weights.sum() if weights.sum() > 0 else np.full(len(members), 1 / len(members))
        node_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=path))
        candidates = [basis_povm(dim)] + [haar_basis_povm(dim, node_rng) for _ in range(pool_size)]
        best, best_score = None, -1.0
        for cand in candidates:
            score = 0.0
            for i, u in enumerate(members):
                deltas = node_deltas(cand, u, epsilon, k)
                w = np.array([out.weight for out in cand])
                score += post[i] * float((w * deltas**2).sum())
            if score > best_score:
                best, best_score = cand, score
        return best

    tree = StrategyTree.from_builder(k, d, depth, builder)
    builder.tree = tree
    return tree


# ---------------------------------------------------------------------------
# Hypothesis-selection tournament

def helstrom_tournament(candidates, copies_per_match: int, true_index: int, rng) -> int:
    """Single-elimination selection among candidate states.

    Each match measures the two-outcome optimal test for the pair on
    ``copies_per_match`` fresh copies of the true state, simulated exactly by
    a binomial draw of the outcome count, and advances the candidate whose
    predicted statistic is closer.
    """
    candidates = [as_array(c) for c in candidates]
    alive = list(range(len(candidates)))
    rho_true = candidates[true_index]
    cache: dict = {}
    while len(alive) > 1:
        nxt = []
        for pos in range(0, len(alive) - 1, 2):
            i, j = alive[pos], alive[pos + 1]
            if (i, j) not in cache:
                proj, _ = helstrom_measurement(candidates[i], candidates[j])
                pi = float(np.real(np.trace(proj @ candidates[i])))
                pj = float(np.real(np.trace(proj @ candidates[j])))
                cache[(i, j)] = (proj, (pi + pj) / 2)
            proj, threshold = cache[(i, j)]
            p_true = float(np.real(np.trace(proj @ rho_true)))
            p_true = min(max(p_true, 0.0), 1.0)
            count = rng.binomial(copies_per_match, p_true)
            nxt.append(i if count / copies_per_match > threshold else j)
        if len(alive) % 2:
            nxt.append(alive[-1])
        alive = nxt
    return alive[0]


def default_copies_per_match(epsilon: float) -> int:
    return int(np.ceil(64.0 / epsilon**2))


# ---------------------------------------------------------------------------
# Shadow observables

def shadow_observable_set(members) -> list:
    """Observables U Z U+ for each rotation; unit operator norm, traceless."""
    obs = []
    for u in members:
        u = as_array(u)
        d = u.shape[0]
        z = pauli_z_n(int(np.log2(d))).matrix
        obs.append(u @ z @ u.conj().T)
    return obs


# ---------------------------------------------------------------------------
# Adaptive and nonadaptive information bounds

@dataclass(frozen=True)
class ChainBoundReport:
    kl_mixture: float
    chain_rhs: float
    per_depth: list
    holds: bool


def chain_bound_check(tree: StrategyTree, epsilon: float, members) -> ChainBoundReport:
    """Exact both-sides evaluation of the transcript KL chain bound.

    LHS: KL of the mixture transcript law against the null. RHS: sum over
    depths of E_{u ~ p_t0}[ L(u)^{-1} E_{i,j}[ L_i(u) L_j(u) phi_ij(u) ] ]
    with all likelihood ratios and correlations exact over the member list.
    """
    members = [as_array(u) for u in members]
    m = len(members)
    k = tree.k
    p0 = null_distribution(tree)
    states = [build_state(UnitaryMatrix(u), epsilon).rho.matrix for u in members]
    mixture = mixture_transcript_distribution(tree, [(1.0 / m, rho) for rho in states])
    lhs = kl_divergence(mixture, p0)

    per_depth = []
    # walk nodes depth by depth carrying p_t0 and per-member likelihood ratios
    level = {(): (1.0, np.ones(m))}
    for t in range(tree.depth):
        depth_sum = 0.0
        nxt = {}
        for path, (p_null, ratios) in level.items():
            outcomes = tree.povm(path)
            deltas = np.stack([node_deltas(outcomes, u, epsilon, k) for u in members])
            weights = np.array([out.weight for out in outcomes])
            l_mean = ratios.mean()
            phi = (deltas * weights) @ deltas.T  # phi[i, j] at this node
            inner = float(ratios @ phi @ ratios) / m**2
            depth_sum += p_null * inner / l_mean
            for idx in range(len(outcomes)):
                child_ratios = ratios * (1.0 + deltas[:, idx])
                nxt[path + (idx,)] = (p_null * weights[idx], child_ratios)
        per_depth.append(depth_sum)
        level = nxt
    rhs = float(sum(per_depth))
    return ChainBoundReport(
        kl_mixture=float(lhs),
        chain_rhs=rhs,
        per_depth=per_depth,
        holds=lhs <= rhs + 1e-10,
    )


@dataclass(frozen=True)
class IngsterBoundReport:
    chi2_mixture: float
    rhs: float
    per_depth_rhs: list
    holds: bool


def ingster_bound_check(tree: StrategyTree, epsilon: float, members) -> IngsterBoundReport:
    """Exact nonadaptive chi-squared bound:
    chi2(mixture || null) <= max_depth E_{i,j}[(1 + phi_ij)^N] - 1."""
    if not tree.nonadaptive:
        raise ValueError("the product-form bound applies to nonadaptive strategies only")
    members = [as_array(u) for u in members]
    m = len(members)
    k = tree.k
    states = [build_state(UnitaryMatrix(u), epsilon).rho.matrix for u in members]
    p0 = null_distribution(tree)
    mixture = mixture_transcript_distribution(tree, [(1.0 / m, rho) for rho in states])
    lhs = chi_squared(mixture, p0)
    per_depth = []
    for t in range(tree.depth):
        outcomes = tree.povm((0,) * t)
        deltas = np.stack([node_deltas(outcomes, u, epsilon, k) for u in members])
        weights = np.array([out.weight for out in outcomes])
        phi = (deltas * weights) @ deltas.T
        per_depth.append(float(((1.0 + phi) ** tree.depth).mean() - 1.0))
    rhs = max(per_depth)
    return IngsterBoundReport(
        chi2_mixture=float(lhs), rhs=rhs, per_depth_rhs=per_depth, holds=lhs <= rhs + 1e-10
    )


@dataclass(frozen=True)
class DiagnosticsRecord:
    """Sampled per-node statistics plus the exact chain-bound evaluation."""

    g_mean: float
    g_stderr: float
    phi_mean: float
    phi_stderr: float
    phi_self_min: float
    k_mean: float
    k_min: float
    chain: ChainBoundReport
    n_samples: int

    def to_json_dict(self) -> dict:
        return {
            "g_mean": self.g_mean,
            "g_stderr": self.g_stderr,
            "phi_mean": self.phi_mean,
            "phi_stderr": self.phi_stderr,
            "phi_self_min": self.phi_self_min,
            "k_mean": self.k_mean,
            "k_min": self.k_min,
            "kl_mixture": self.chain.kl_mixture,
            "chain_rhs": self.chain.chain_rhs,
            "chain_holds": self.chain.holds,
            "n_samples": self.n_samples,
        }


def adaptive_diagnostics(tree: StrategyTree, epsilon: float, members, n_samples: int,
                         rng) -> DiagnosticsRecord:
    """Haar-sampled G, phi, K statistics at the root POVM plus the exact
    chain bound over the member list."""
    k, d = tree.k, tree.d
    outcomes = tree.povm(())
    weights = np.array([out.weight for out in outcomes])
    g_vals = np.empty(n_samples)
    phi_vals = np.empty(n_samples)
    k_vals = np.empty(n_samples)
    phi_self_min = np.inf
    for i in range(n_samples):
        u = haar_sample(d, rng)
        v = haar_sample(d, rng)
        du = node_deltas(outcomes, u, epsilon, k)
        dv = node_deltas(outcomes, v, epsilon, k)
        g_vals[i] = sqrt(float((weights * du**2).sum()))
        phi_vals[i] = float((weights * du * dv).sum())
        k_vals[i] = float((weights * (du + dv) ** 2).sum())
        phi_self_min = min(phi_self_min, float((weights * du * du).sum()))
    chain = chain_bound_check(tree, epsilon, members)
    return DiagnosticsRecord(
        g_mean=float(g_vals.mean()),
        g_stderr=float(g_vals.std(ddof=1) / sqrt(n_samples)),
        phi_mean=float(phi_vals.mean()),
        phi_stderr=float(phi_vals.std(ddof=1) / sqrt(n_samples)),
        phi_self_min=float(phi_self_min),
        k_mean=float(k_vals.mean()),
        k_min=float(k_vals.min()),
        chain=chain,
        n_samples=n_samples,
    )


# ---------------------------------------------------------------------------
# Fully entangled reference test

def entangled_helstrom_success(epsilon: float, n_copies: int) -> float:
    """Exact optimal success of one joint measurement on n copies.

    Both hypotheses are diagonal in the rotated basis, so the trace norm
    reduces to a binomial sum independent of the dimension:
    1/2 + (1/4) sum_w C(n,w) 2^-n |1 - (1+eps)^w (1-eps)^(n-w)|.
    """
    total = sum(
        comb(n_copies, w) * abs(1.0 - (1 + epsilon) ** w * (1 - epsilon) ** (n_copies - w))
        for w in range(n_copies + 1)
    )
    return 0.5 + total / (4.0 * 2**n_copies)


def minimal_entangled_copies(epsilon: float, target: float, cap: int = 10_000) -> int:
    """Smallest copy count whose exact joint-measurement success reaches target."""
    for n in range(1, cap + 1):
        if entangled_helstrom_success(epsilon, n) >= target:
            return n
    raise ValueError(f"target {target} not reached within {cap} copies")


def fit_power_law(xs, ys):
    """Least-squares exponent of y ~ x^s on log-log axes, with stderr."""
    from .designs import fit_log_slope

    return fit_log_slope(xs, ys)
