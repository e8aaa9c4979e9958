"""Influence models: networked Markov chains with quasi-linear updates.

The package builds the master (joint) Markov chain of an influence
model, analyzes what partial observation does to it, simulates seeded
trajectories, and estimates parameters from fully or partially observed
data.
"""

from .model import (
    InfluenceModel,
    InvalidModelError,
    ModelStructure,
    StateCodec,
    ValidationReport,
    joint_index,
    joint_state,
    model_fingerprint,
    next_status_distribution,
    validate_model,
)
from .chain import (
    AmbiguousStationaryError,
    CapExceededError,
    ClassDecomposition,
    MasterChain,
    StationaryDistribution,
    build_master_chain,
    communicating_classes,
    conditional_observed_probability,
    lumped_one_step_chain,
    markovianity_gap,
    observed_path_log_probability,
    observed_path_probability,
    single_recurrent_class,
    stationary_distribution,
)
from .simulate import (
    ObservationSequence,
    Trajectory,
    empirical_transition_counts,
    project_observations,
    sample_trajectory,
)
from .estimate import (
    EMConfig,
    FitConfig,
    FullObsEstimate,
    HMMEstimate,
    InfluenceParamEstimate,
    PermutationMatchReport,
    baum_welch_poim,
    direct_em_full_obs,
    estimate_G_counting,
    forward_log_likelihood,
    permutation_match,
    recover_influence_params,
)
from .reference import (
    binary_copy_model,
    run_reference_checks,
    two_site_reference_model,
)

__version__ = "0.1.0"
