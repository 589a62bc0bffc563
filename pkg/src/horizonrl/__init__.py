"""Multi-turn agent reinforcement learning at desk scale.

Text environments behind a session protocol, a feature-hashed softmax
policy, outcome-reward policy-gradient estimators and a progressive
interaction-horizon curriculum.
"""

from __future__ import annotations

from .algorithms import UpdateConfig, apply_update, policy_update
from .envs import ENV_KINDS, TaskSpec, generate_task, optimal_length
from .errors import CollectionFailed, HorizonRLError, NumericError, ProtocolError, ValidationError
from .evaluation import EvalReport, evaluate, export_transcript, pass_at_k, turn_scaling_eval
from .policy import Policy, action_distribution, featurize, load_checkpoint, save_checkpoint
from .scheduler import HorizonSchedule, horizon_at, validate_schedule
from .trainer import RunConfig, train

__version__ = "0.1.0"

__all__ = [
    "ENV_KINDS",
    "CollectionFailed",
    "EvalReport",
    "HorizonRLError",
    "HorizonSchedule",
    "NumericError",
    "Policy",
    "ProtocolError",
    "RunConfig",
    "TaskSpec",
    "UpdateConfig",
    "ValidationError",
    "action_distribution",
    "apply_update",
    "evaluate",
    "export_transcript",
    "featurize",
    "generate_task",
    "horizon_at",
    "load_checkpoint",
    "optimal_length",
    "pass_at_k",
    "policy_update",
    "save_checkpoint",
    "train",
    "turn_scaling_eval",
    "validate_schedule",
]
