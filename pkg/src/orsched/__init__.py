"""Reactive operating-theatre sequencing toolkit.

Builds daily surgical schedules with constructive heuristics, keeps them
feasible in real time under stochastic disruptions via probabilistic
reaction policies, and provides a seeded simulation/tuning harness plus
an LP-format export of the underlying linear model.
"""

__version__ = "0.1.0"

from .domain import (
    CONSTRAINT_NAMES,
    FeasibilityReport,
    HorizonParams,
    Instance,
    OperatingRoom,
    Patient,
    PatientClass,
    Placement,
    Schedule,
    StructuralError,
    Surgeon,
    UnplaceablePatientsError,
    Violation,
    check_feasibility,
    earliest_append_start,
    overlaps,
)
from .heuristics import (
    SchedulingState,
    block_schedule,
    open_schedule,
    select_add_elective,
)
from .instancegen import GenParams, WeekInstance, generate_week, realize_duration, week_from_adapter
from .mip import (
    MipExportError,
    MipModel,
    assignment_from_schedule,
    build_model,
    evaluate_model,
    export_mip,
)
from .objective import (
    MetricsSnapshot,
    contribution,
    mean_nonelective_wait,
    overtime,
    patients_treated,
    utilisation,
)
from .oracle import OracleSizeError, enumerate_schedules, exhaustive_oracle
from .reactive import (
    Disruption,
    PolicyError,
    ReactionPolicy,
    UpdateStrategy,
    default_policy,
    detect_derived,
    prior_policy,
    react,
    sample_reaction,
    should_update,
)
from .simulator import (
    ReplicationAggregate,
    SimulationInfeasibleError,
    SimulationResult,
    run_replications,
    seed_stream,
    simulate_week,
)
from .tuner import TunerConfig, TuningResult, perturb, tune
