from .checkpoint import (
    TrainerCheckpoint,
    load_any_policy,
    load_checkpoint,
    load_policy,
    save_checkpoint,
    save_policy,
)
from .network import (
    PolicyDims,
    PolicyParams,
    backward,
    forward,
    group_loss,
    init_params,
)
from .optimizer import OptimizerState, optimizer_step
from .render import render
from .sampling import (
    NUM_DECISIONS,
    DistributionParams,
    closed_form_kl,
    greedy,
    logprob,
    sample,
)

__all__ = [
    "PolicyDims",
    "PolicyParams",
    "DistributionParams",
    "OptimizerState",
    "TrainerCheckpoint",
    "NUM_DECISIONS",
    "init_params",
    "forward",
    "backward",
    "group_loss",
    "sample",
    "logprob",
    "greedy",
    "closed_form_kl",
    "render",
    "optimizer_step",
    "save_policy",
    "load_policy",
    "load_any_policy",
    "save_checkpoint",
    "load_checkpoint",
]
