"""Pretraining, compliance learning and repeated risk minimization."""

from .compliance import (
    ComplianceSample,
    ComplianceSet,
    CompliancePredictor,
    SimulatedResponse,
    blend,
    collect_compliance,
    compliance_features,
    inverse_frequency_weights,
    simulate_response,
    train_compliance,
)
from .env import CreditEnvironment, SyntheticEnvironment, derive_seed
from .nets import ConstantClassifier, ScaledNet, bce_loss, fit_network, minimize, squared_loss
from .rrm import (
    IterationLog,
    Pretrained,
    RRMConfig,
    RRMState,
    Warmup,
    compliance_sampler,
    evaluate,
    evaluate_state,
    holdout_population,
    joint_objective,
    prepare,
    pretrain,
    recommend,
    rrm_fixed_ce,
    rrm_joint,
)

__all__ = [
    "ComplianceSample",
    "ComplianceSet",
    "CompliancePredictor",
    "ConstantClassifier",
    "CreditEnvironment",
    "IterationLog",
    "Pretrained",
    "RRMConfig",
    "RRMState",
    "ScaledNet",
    "SimulatedResponse",
    "SyntheticEnvironment",
    "Warmup",
    "bce_loss",
    "blend",
    "collect_compliance",
    "compliance_features",
    "compliance_sampler",
    "derive_seed",
    "evaluate",
    "evaluate_state",
    "fit_network",
    "holdout_population",
    "inverse_frequency_weights",
    "joint_objective",
    "minimize",
    "prepare",
    "pretrain",
    "recommend",
    "rrm_fixed_ce",
    "rrm_joint",
    "simulate_response",
    "squared_loss",
    "train_compliance",
]
