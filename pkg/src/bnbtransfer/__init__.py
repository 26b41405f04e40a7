"""Learned pruning for branch and bound, with self-imitation transfer.

The package solves small mixed-integer programs (Cloud-RAN network power
minimization and toy MILPs) by depth-first branch and bound, learns a node
pruning classifier from exact searches, and adapts that classifier to new
problem settings from unlabeled instances.
"""

__version__ = "0.1.0"

# re-exports for ``from bnbtransfer import ...``
# flake8: noqa: F401

from .bnb import (
    BnbConfig, BnbNode, BnbTrace, Blended, ExactOracle, FathomReason, Learned, PreserveAll,
    fathom_check, mark_optimal_path, policy_prune_decision, run_bnb,
)
from .errors import (
    BnbTransferError, ConfigError, DimensionError, EmptyDatasetError, EmptyReportError,
    InvalidFixings, InvalidScenario, IterationStarved, NoIncumbentError, NotSolvedError,
    NumericalError, ParseError, VersionError,
)
from .features import FEATURE_NAMES, FEATURE_VERSION, NUM_FEATURES, featurize
from .imitate import (
    LabeledSample, SelfImitationConfig, blend_policy, collect, generate_labeled_dataset,
    self_imitation, self_imitation_run,
)
from .mlp import (
    ClassWeights, Decision, MlpParams, TrainConfig, classify, compute_class_weights, forward,
    init_params, train, weighted_cross_entropy,
)
from .model import (
    Assignment, CloudRanScenario, MinlpInstance, Sense, evaluate_assignment,
    gen_cloudran_instance, gen_toy_milp,
)
from .pipeline import ExperimentConfig, Mode, ReportRow, report_emit, run_pipeline
from .relax import Fixings, RelaxResult, RelaxStatus, SolveCache, build_relaxation, cached_solve, solve_relaxation
