"""Counterfactual estimation for panel data with few treated units.

Five estimator families over one shared panel structure: difference in
differences, interactive fixed effects, synthetic control, regression on
control series (plain and penalized), and a Bayesian structural time
series model. Plus placebo inference, diagnostics, and a simulation
harness with known truth.
"""

from . import cim, did, hcw, inference, lfm, scm, sim
from .effects import EffectEstimate
from .errors import (
    CausalPanelError,
    EstimationError,
    PanelValidationError,
)
from .panel import (
    PanelDataset,
    load_csv,
    pseudo_treated,
    save_csv,
    single_treated,
    split_pre_post,
    treated_average,
)

__version__ = "0.1.0"

__all__ = [
    "CausalPanelError",
    "EffectEstimate",
    "EstimationError",
    "PanelDataset",
    "PanelValidationError",
    "cim",
    "did",
    "hcw",
    "inference",
    "lfm",
    "load_csv",
    "pseudo_treated",
    "save_csv",
    "scm",
    "sim",
    "single_treated",
    "split_pre_post",
    "treated_average",
]
