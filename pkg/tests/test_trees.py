import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from replicalab.circuits import build_state
from replicalab.linalg import SelfCheckError, UnitaryMatrix, maximally_mixed
from replicalab.trees import (
    PovmNode,
    PovmOutcome,
    PovmValidationError,
    StrategyTree,
    TranscriptDistribution,
    basis_povm,
    chi_squared,
    delta_perturbation,
    haar_basis_povm,
    kl_divergence,
    lecam_check,
    likelihood_ratio,
    mean_likelihood_ratio,
    mixed_basis_povm,
    mixture_transcript_distribution,
    ml_decision,
    node_deltas,
    null_distribution,
    pairwise_correlation,
    random_tree,
    refine_povm,
    standard_tree,
    transcript_distribution,
    tv_distance,
    validate_povm,
)
from replicalab.weingarten import haar_sample

from conftest import random_unit_vector


def distribution_pair(rng, size=6):
    a = rng.random(size) + 1e-3
    b = rng.random(size) + 1e-3
    a, b = a / a.sum(), b / b.sum()
    keys = [(i,) for i in range(size)]
    return (
        TranscriptDistribution(probs=dict(zip(keys, a))),
        TranscriptDistribution(probs=dict(zip(keys, b))),
    )


class TestPovmValidation:
    def test_standard_basis_is_complete(self):
        validate_povm(basis_povm(4), 4)

    def test_halved_weights_rejected(self):
        outs = [PovmOutcome(weight=o.weight / 2, vector=o.vector) for o in basis_povm(4)]
        with pytest.raises(PovmValidationError) as err:
            validate_povm(outs, 4)
        assert err.value.residual == pytest.approx(np.linalg.norm(np.eye(4) / 2))

    def test_haar_basis_valid(self, rng):
        validate_povm(haar_basis_povm(8, rng), 8)

    def test_mixed_basis_valid(self, rng):
        validate_povm(mixed_basis_povm(4, rng), 4)


class TestRefinePovm:
    def test_identity_refines_to_basis(self):
        outs = refine_povm([np.eye(2)])
        assert len(outs) == 2
        for out, parent in outs:
            assert parent == 0
            assert out.weight == pytest.approx(0.5)

    def test_projector_pair(self, rng):
        v = random_unit_vector(4, rng)
        p = np.outer(v, v.conj())
        outs = refine_povm([p, np.eye(4) - p])
        counts = {0: 0, 1: 0}
        sums = {0: np.zeros((4, 4), dtype=complex), 1: np.zeros((4, 4), dtype=complex)}
        for out, parent in outs:
            counts[parent] += 1
            sums[parent] += out.weight * 4 * np.outer(out.vector, out.vector.conj())
        assert counts == {0: 1, 1: 3}
        assert np.abs(sums[0] - p).max() < 1e-10
        assert np.abs(sums[1] - (np.eye(4) - p)).max() < 1e-10

    def test_helstrom_pair_reassembles(self, rng):
        from replicalab.linalg import helstrom_measurement

        a = build_state(haar_sample(4, rng), 0.4).rho.matrix
        proj, _ = helstrom_measurement(a, maximally_mixed(4).matrix)
        outs = refine_povm([proj, np.eye(4) - proj])
        total = sum(out.weight * 4 * np.outer(out.vector, out.vector.conj()) for out, _ in outs)
        assert np.abs(total - np.eye(4)).max() < 1e-10

    def test_non_psd_rejected(self):
        bad = np.diag([1.5, -0.5])
        with pytest.raises(ValueError):
            refine_povm([bad, np.eye(2) - bad])


class TestTranscriptDistribution:
    def test_uniform_under_maximally_mixed(self):
        tree = standard_tree(1, 4, 1)
        dist = transcript_distribution(tree, maximally_mixed(4).matrix)
        assert all(p == pytest.approx(0.25) for p in dist.probs.values())

    def test_deterministic_eigenbasis(self):
        tree = standard_tree(1, 2, 2)
        dist = transcript_distribution(tree, np.diag([1.0, 0.0]).astype(complex))
        assert dist.probs[(0, 0)] == pytest.approx(1.0)

    def test_path_product_oracle(self, rng):
        tree = random_tree(2, 2, 2, rng, adaptive=True)
        rho = build_state(haar_sample(2, rng), 0.25).rho.matrix
        rho2 = np.kron(rho, rho)
        dist = transcript_distribution(tree, rho)
        for path, prob in dist.probs.items():
            acc = 1.0
            for t in range(len(path)):
                out = tree.povm(path[:t])[path[t]]
                acc *= out.weight * 4 * np.real(out.vector.conj() @ rho2 @ out.vector)
            assert prob == pytest.approx(acc, abs=1e-12)

    def test_probabilities_sum_to_one(self, rng):
        tree = random_tree(1, 4, 3, rng, adaptive=True)
        rho = build_state(haar_sample(4, rng), 0.3).rho.matrix
        dist = transcript_distribution(tree, rho)
        assert sum(dist.probs.values()) == pytest.approx(1.0, abs=1e-9)

    def test_null_distribution_is_weight_product(self, rng):
        tree = random_tree(1, 2, 3, rng, adaptive=True)
        p0 = null_distribution(tree)
        full = transcript_distribution(tree, maximally_mixed(2).matrix)
        for key in p0.probs:
            assert p0.probs[key] == pytest.approx(full.probs[key], abs=1e-12)


class TestMixtures:
    def test_point_mass_matches_single_state(self, rng):
        tree = standard_tree(1, 2, 2)
        rho = build_state(haar_sample(2, rng), 0.2).rho.matrix
        mix = mixture_transcript_distribution(tree, [(1.0, rho)])
        single = transcript_distribution(tree, rho)
        for key in mix.probs:
            assert mix.probs[key] == pytest.approx(single.probs[key])

    def test_two_state_mixture_linearity(self, rng):
        tree = standard_tree(1, 2, 2)
        r1 = build_state(haar_sample(2, rng), 0.2).rho.matrix
        r2 = build_state(haar_sample(2, rng), 0.2).rho.matrix
        mix = mixture_transcript_distribution(tree, [(0.5, r1), (0.5, r2)])
        d1, d2 = transcript_distribution(tree, r1), transcript_distribution(tree, r2)
        for key in mix.probs:
            assert mix.probs[key] == pytest.approx((d1.probs[key] + d2.probs[key]) / 2)

    def test_sampler_form_matches_exact_twirl(self, rng):
        # ensemble-averaged law at k=2 against the exact degree-2 twirl
        from replicalab.designs import exact_haar_moment_apply
        from replicalab.circuits import pauli_z_n
        from replicalab.linalg import tensor_power_quadratic_form

        d, eps = 2, 1 / 6
        tree = random_tree(2, d, 1, rng, adaptive=False)
        sampler = lambda r: build_state(haar_sample(d, r), eps).rho.matrix
        approx, stderr = mixture_transcript_distribution(tree, sampler, n_samples=4000, rng=rng)
        z = pauli_z_n(1).matrix
        twirl_zz = exact_haar_moment_apply(2, np.kron(z, z), d)
        mean_op = np.eye(d * d) + eps**2 * twirl_zz  # odd tensor factors average to zero
        outcomes = tree.povm(())
        for idx, out in enumerate(outcomes):
            exact = out.weight * np.real(np.vdot(out.vector, mean_op @ out.vector))
            got = approx.probs[(idx,)]
            assert abs(got - exact) < 5 * max(stderr[(idx,)], 1e-5)


class TestPerturbations:
    def test_zero_strength(self, rng):
        psi = random_unit_vector(4, rng)
        assert delta_perturbation(psi, haar_sample(2, rng), 0.0, 2) == pytest.approx(0.0)

    def test_aligned_eigenvector(self, rng):
        u = haar_sample(4, rng)
        from replicalab.circuits import pauli_z_n

        m = u @ pauli_z_n(2).matrix @ u.conj().T
        evals, vecs = np.linalg.eigh(m)
        psi = vecs[:, np.argmax(evals)]  # eigenvalue +1
        assert delta_perturbation(psi, u, 0.27, 1) == pytest.approx(0.27)

    def test_bounded_at_critical_strength(self, rng):
        for k in (1, 2, 3):
            for _ in range(60):
                d = int(2 ** rng.integers(1, 3))
                psi = random_unit_vector(d**k, rng)
                delta = delta_perturbation(psi, haar_sample(d, rng), 1 / (3 * k), k)
                assert abs(delta) <= 1.0

    def test_weighted_average_closed_form(self, rng):
        # sum_v w_v delta(v) = d^-k tr((d rho_U)^{k} - 1)
        d, k, eps = 2, 2, 0.3
        outcomes = haar_basis_povm(d**k, rng)
        u = haar_sample(d, rng)
        deltas = node_deltas(outcomes, u, eps, k)
        weights = np.array([o.weight for o in outcomes])
        rho = build_state(UnitaryMatrix(u), eps).rho.matrix
        rk = np.kron(rho * d, rho * d)
        want = (np.trace(rk).real - d**k) / d**k
        assert (weights * deltas).sum() == pytest.approx(want, abs=1e-10)


class TestLikelihoodRatio:
    def test_zero_strength_is_one(self, rng):
        tree = random_tree(1, 2, 3, rng)
        assert likelihood_ratio(tree, (0, 1, 0), haar_sample(2, rng), 0.0) == pytest.approx(1.0)

    def test_single_step(self, rng):
        tree = random_tree(1, 2, 1, rng)
        u = haar_sample(2, rng)
        out = tree.povm(())[1]
        want = 1.0 + delta_perturbation(out.vector, u, 0.3, 1)
        assert likelihood_ratio(tree, (1,), u, 0.3) == pytest.approx(want)

    def test_factorization_against_transcripts(self, rng):
        eps = 0.3
        for _ in range(10):
            tree = random_tree(1, 2, 3, rng, adaptive=True)
            u = haar_sample(2, rng)
            rho = build_state(UnitaryMatrix(u), eps).rho.matrix
            p0 = null_distribution(tree)
            pu = transcript_distribution(tree, rho)
            for path in p0.probs:
                lhs = likelihood_ratio(tree, path, u, eps) * p0.probs[path]
                assert lhs == pytest.approx(pu.probs[path], abs=1e-9)

    def test_mean_ratio(self, rng):
        tree = random_tree(1, 2, 2, rng)
        members = [haar_sample(2, rng) for _ in range(3)]
        got = mean_likelihood_ratio(tree, (0, 1), members, 0.2)
        want = np.mean([likelihood_ratio(tree, (0, 1), u, 0.2) for u in members])
        assert got == pytest.approx(want)


class TestPairwiseCorrelation:
    def test_self_correlation_nonnegative(self, rng):
        outcomes = haar_basis_povm(4, rng)
        u = haar_sample(4, rng)
        assert pairwise_correlation(outcomes, u, u, 0.25, 1) >= 0.0

    def test_zero_strength(self, rng):
        outcomes = basis_povm(4)
        assert pairwise_correlation(outcomes, haar_sample(4, rng), haar_sample(4, rng), 0.0, 1) == 0.0

    def test_haar_average_vanishes_k1(self, rng):
        outcomes = basis_povm(8)
        eps = 1 / 3
        vals = np.array([
            pairwise_correlation(outcomes, haar_sample(8, rng), haar_sample(8, rng), eps, 1)
            for _ in range(800)
        ])
        se = vals.std(ddof=1) / np.sqrt(vals.size)
        assert abs(vals.mean()) < 5 * se


class TestDivergences:
    def test_equal_distributions(self, rng):
        p, _ = distribution_pair(rng)
        assert tv_distance(p, p) == 0.0
        assert kl_divergence(p, p) == pytest.approx(0.0)
        assert chi_squared(p, p) == pytest.approx(0.0)

    def test_disjoint_supports(self):
        p = TranscriptDistribution(probs={(0,): 1.0, (1,): 0.0})
        q = TranscriptDistribution(probs={(0,): 0.0, (1,): 1.0})
        assert tv_distance(p, q) == pytest.approx(1.0)

    def test_half_swap(self):
        p = TranscriptDistribution(probs={(0,): 0.75, (1,): 0.25})
        q = TranscriptDistribution(probs={(0,): 0.25, (1,): 0.75})
        assert tv_distance(p, q) == pytest.approx(0.5)

    def test_mismatched_spaces_rejected(self):
        p = TranscriptDistribution(probs={(0,): 1.0})
        q = TranscriptDistribution(probs={(1,): 1.0})
        with pytest.raises(ValueError):
            tv_distance(p, q)

    @given(st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_pinsker_and_ordering(self, seed):
        local = np.random.default_rng(seed)
        p, q = distribution_pair(local)
        tv = tv_distance(p, q)
        kl = kl_divergence(p, q)
        chi = chi_squared(p, q)
        assert tv <= np.sqrt(kl / 2) + 1e-12
        assert kl <= chi + 1e-12

    def test_kl_support_violation(self):
        p = TranscriptDistribution(probs={(0,): 0.5, (1,): 0.5})
        q = TranscriptDistribution(probs={(0,): 1.0, (1,): 0.0})
        with pytest.raises(ValueError):
            kl_divergence(p, q)


class TestDecisionBounds:
    def test_identical_distributions_error_sum(self, rng):
        p, _ = distribution_pair(rng)
        decision = {key: (0 if key[0] % 2 else 1) for key in p.probs}
        report = lecam_check(p, p, decision)
        assert report.error_sum >= 1.0 - 1e-12
        assert report.holds

    def test_disjoint_with_indicator(self):
        p = TranscriptDistribution(probs={(0,): 1.0, (1,): 0.0})
        q = TranscriptDistribution(probs={(0,): 0.0, (1,): 1.0})
        decision = {(0,): 0, (1,): 1}
        report = lecam_check(p, q, decision)
        assert report.error_sum == pytest.approx(0.0)
        assert report.tv == pytest.approx(1.0)

    def test_ml_rule_achieves_bound(self, rng):
        for _ in range(50):
            p, q = distribution_pair(rng)
            report = lecam_check(p, q, ml_decision(p, q))
            assert report.error_sum == pytest.approx(1.0 - report.tv, abs=1e-12)

    def test_ratio_floor_implication(self, rng):
        for _ in range(300):
            p, q = distribution_pair(rng)
            _, a, b = p.aligned(q)
            delta = 1.0 - (a / b).min() + 1e-12
            assert likelihood_ratio_floor_check_wrapper(p, q, delta)

    def test_floor_trivial_cases(self, rng):
        p, _ = distribution_pair(rng)
        from replicalab.trees import likelihood_ratio_floor_check

        assert likelihood_ratio_floor_check(p, p, 0.5)
        assert likelihood_ratio_floor_check(p, p, 1e-9)


def likelihood_ratio_floor_check_wrapper(p, q, delta):
    from replicalab.trees import likelihood_ratio_floor_check

    return likelihood_ratio_floor_check(p, q, delta)


class TestTreeStructure:
    def test_depth_and_marginals(self, rng):
        tree = random_tree(1, 2, 3, rng, adaptive=True)
        for t in range(4):
            level = tree.nodes_at_depth(t)
            assert len(level) == 2**t
            assert sum(level.values()) == pytest.approx(1.0)

    def test_branching_cap(self, rng):
        from replicalab.linalg import ResourceBudgetError

        with pytest.raises(ResourceBudgetError):
            random_tree(2, 4, 1, rng, branching_cap=4)

    def test_node_vectors_nonadaptive(self, rng):
        tree = random_tree(1, 2, 3, rng, adaptive=False)
        assert len(tree.node_vectors()) == 3 * 2

    def test_explicit_root_constructor(self, rng):
        leaf_povm = tuple(basis_povm(2))
        child = PovmNode(outcomes=leaf_povm)
        root = PovmNode(outcomes=leaf_povm, children=(child, child))
        tree = StrategyTree.from_root(1, 2, root)
        assert tree.depth == 2
        dist = null_distribution(tree)
        assert sum(dist.probs.values()) == pytest.approx(1.0)

    def test_json_round_trip(self, rng):
        tree = random_tree(1, 2, 2, rng, adaptive=True)
        clone = StrategyTree.from_json(tree.to_json())
        rho = build_state(haar_sample(2, rng), 0.2).rho.matrix
        a = transcript_distribution(tree, rho)
        b = transcript_distribution(clone, rho)
        for key in a.probs:
            assert a.probs[key] == pytest.approx(b.probs[key], abs=1e-12)

    def test_csv_export(self, tmp_path, rng):
        tree = random_tree(1, 2, 2, rng)
        dist = null_distribution(tree)
        out = tmp_path / "dist.csv"
        dist.to_csv(out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "path,probability"
        assert len(lines) == 1 + len(dist.probs)
