"""Maximum likelihood inference for ballistic random walks in i.i.d. random environments."""

from .env_models import (
    BetaFamily,
    EnvModel,
    RegimeReport,
    ThetaBox,
    TwoPointFree,
    TwoPointKnown,
    classify_regime,
    rho_moment,
    sample_environment,
)
from .estimator import EstimateReport, Status, confidence_region, mle, observed_fisher, temkin_naive
from .likelihood import LikelihoodEval, criterion, grad_phi, hess_phi, phi
from .walk import WalkRecord, criterion_stats, run_to_hitting

__all__ = [
    "BetaFamily", "EnvModel", "EstimateReport", "LikelihoodEval", "RegimeReport", "Status", "ThetaBox",
    "TwoPointFree", "TwoPointKnown", "WalkRecord", "classify_regime", "confidence_region", "criterion",
    "criterion_stats", "grad_phi", "hess_phi", "mle", "observed_fisher", "phi", "rho_moment",
    "run_to_hitting", "sample_environment", "temkin_naive",
]
