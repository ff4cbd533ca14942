"""replicalab: a desk-scale laboratory for replica-limited quantum state testing."""

__version__ = "0.1.0"

from .circuits import (
    CircuitEnsemble,
    StateFamilyMember,
    build_state,
    default_v_gate,
    pauli_z_n,
    sample_clifford,
    sample_interleaved,
)
from .designs import (
    MomentReport,
    concentration_probe,
    design_distance,
    empirical_moment_apply,
    exact_haar_moment_apply,
    frame_potential,
)
from .linalg import (
    DensityMatrix,
    PureState,
    ResourceBudgetError,
    SelfCheckError,
    UnitaryMatrix,
    helstrom_measurement,
    maximally_mixed,
    partial_trace,
    schatten_norm,
    set_memory_budget,
    tensor_power,
    tensor_product,
    trace_distance,
)
from .perms import (
    CycleDecomposition,
    Permutation,
    cycle_count,
    enumerate_sym,
    permutation_operator,
    sum_d_power_cycles,
    sum_d_power_even_cycles,
    trace_perm_tensor,
)
from .tasks import (
    DiagnosticsRecord,
    PhiOperators,
    TaskInstance,
    adaptive_diagnostics,
    build_phi_operators,
    chain_bound_check,
    entangled_helstrom_success,
    helstrom_tournament,
    ingster_bound_check,
    run_strategy,
    second_moment_exact,
    second_moment_mc,
    shadow_observable_set,
    symmetrize_rotations,
    tv_bound_rhs,
)
from .trees import (
    PovmNode,
    PovmOutcome,
    StrategyTree,
    TranscriptDistribution,
    chi_squared,
    delta_perturbation,
    kl_divergence,
    lecam_check,
    likelihood_ratio,
    mixture_transcript_distribution,
    null_distribution,
    pairwise_correlation,
    refine_povm,
    transcript_distribution,
    tv_distance,
    validate_povm,
)
from .weingarten import (
    UnsupportedRegimeError,
    WeingartenTable,
    haar_expect_trace_power,
    haar_moment_entries,
    haar_sample,
    montanaro_bound_check,
    weingarten_table,
)
