"""ctprior: a deterministic sampling engine for continuous-time temporal
structural causal models, with counterfactual pairing, schedule-aware
integration, and statistical self-verification."""

__version__ = "0.1.0"

from .analysis import (
    InvarianceReport,
    StabilityReport,
    em_bias_curve,
    energy_distance_test,
    ou_divergence_rate,
    saturation_study,
    scalar_ou_spec,
    schedule_invariance_test,
    stability_report,
)
from .errors import (
    ConfigurationError,
    ContractViolation,
    CtpriorError,
    EmptyPreWindowError,
    RecordFormatError,
)
from .graph import Dag, GraphConfig, designate_roles, sample_named_structure, sample_random_dag
from .integrator import (
    NoisePlan,
    PairedTrajectories,
    Trajectory,
    em_step,
    exact_ou_transition,
    paired_simulate,
    simulate,
)
from .intervention import (
    InterventionConfig,
    InterventionSpec,
    apply,
    positivity_clip,
    sample_intervention,
)
from .mechanism import (
    DriftBank,
    LinearDrift,
    MechanismConfig,
    NeuralDrift,
    RegimeConfig,
    RegimeSpec,
    TscmSpec,
    drift,
    sample_regime_spec,
    sample_tscm,
    spec_fingerprint,
)
from .pipeline import (
    BatchConfig,
    NormStats,
    SamplePair,
    build_record,
    config_digest,
    normalize,
    sample_batch,
    sample_pair,
)
from .rng import RngStream
from .schedule import (
    FineGrid,
    ObservationSchedule,
    ScheduleConfig,
    build_substep_grid,
    build_union_grid,
    draw_schedule,
    sample_schedule,
)
from .timefeat import FrequencyBank, fourier_features, gap_features

__all__ = [
    "__version__",
    "RngStream",
    "Dag", "GraphConfig", "sample_random_dag", "sample_named_structure", "designate_roles",
    "ObservationSchedule", "FineGrid", "ScheduleConfig",
    "sample_schedule", "draw_schedule", "build_substep_grid", "build_union_grid",
    "LinearDrift", "NeuralDrift", "DriftBank", "RegimeSpec", "TscmSpec",
    "MechanismConfig", "RegimeConfig",
    "sample_tscm", "sample_regime_spec", "drift", "spec_fingerprint",
    "InterventionSpec", "InterventionConfig", "sample_intervention", "apply", "positivity_clip",
    "NoisePlan", "Trajectory", "PairedTrajectories",
    "em_step", "exact_ou_transition", "simulate", "paired_simulate",
    "BatchConfig", "NormStats", "SamplePair",
    "normalize", "sample_pair", "sample_batch", "build_record", "config_digest",
    "InvarianceReport", "StabilityReport",
    "scalar_ou_spec", "schedule_invariance_test", "stability_report",
    "em_bias_curve", "saturation_study", "energy_distance_test", "ou_divergence_rate",
    "FrequencyBank", "fourier_features", "gap_features",
    "CtpriorError", "ConfigurationError", "ContractViolation",
    "EmptyPreWindowError", "RecordFormatError",
]
