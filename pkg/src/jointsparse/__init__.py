"""Joint intensity-depth sparse coding toolkit.

Library for sparse coding of paired two-modality signals with a common
sparse support: a conic-program solver for the coupled-activity model,
group-lasso and total-variation baselines, two-step dictionary learning,
recovery-error bounds, and reproducible experiment pipelines.
"""

from .baselines import GlOptions, GlResult, TvOptions, solve_gl, tv_inpaint
from .errors import (
    BadSparsity,
    DegenerateDenominator,
    DimensionMismatch,
    EmptyMask,
    Exhausted,
    Infeasible,
    JointSparseError,
    MissingDictionary,
    ParseError,
    SingleColumn,
    SizeMismatch,
    TooSmall,
    ZeroOnSupport,
    ZeroSignal,
)
from .learning import (
    ImagePatchSource,
    LearnConfig,
    LearnHistory,
    MatchResult,
    PatchBatch,
    SignalPool,
    learn,
    match_atoms,
    sample_patches,
    update_dictionaries,
    whiten,
)
from .model import (
    DictionaryPair,
    GroundTruth,
    JointCode,
    RipEstimate,
    SignalPair,
    block_dict,
    coherence,
    delta_estimate,
    gamma_of,
    normalize_pair,
    random_dictionary_pair,
    synthesize,
)
from .rng import substream
from .solver import (
    FeasibilityReport,
    JbpProblem,
    JbpSolution,
    SolverOptions,
    check_feasibility,
    phase1_start,
    solve,
    tighten_activity,
)
from .theory import (
    BoundInputs,
    TheoryCheckInstance,
    bound_constant,
    cone_constraint_check,
    recovery_bound,
)

__version__ = "0.1.0"
