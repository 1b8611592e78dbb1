"""Deep ReLU network first steps for doubly robust semiparametric inference."""

__version__ = "0.1.0"

from .causal import (
    CausalDataset,
    EstimateReport,
    NuisanceEstimates,
    ScoreVector,
    ate,
    confidence_interval,
    decomposition,
    diagnostics_theorem3,
    profit,
    profit_diff,
    scores_full,
    scores_sub,
    tot,
)
from .losses import LossKind, curvature_constants, loss_grad, loss_value, mean_from_f
from .network import ArchitectureSpec, NetworkState, advise_architecture, backward, forward, initialize, param_count
from .policy import ThresholdPolicyClass, evaluate_grid, select_optimal
from .simulation import DgpSpec, McReport, draw_coefficients, generate_sample, run_placebo, run_study, true_ate
from .training import TrainConfig, fit, fit_joint, fit_propensity, fit_regressions_by_arm
