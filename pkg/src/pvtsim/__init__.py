"""Deterministic federated-learning simulator with partial variable training.

Clients freeze a per-round subset of variables, train the rest with local
SGD, and upload only the trained deltas in a compact binary frame; the
server averages each variable over its contributors. Analytic cost models
track the activation-buffer memory and upload bytes saved by freezing.
"""

from .client import ClientConfig, ClientUpdate, DivergenceError, local_train, measure_costs
from .costs import CostReport, cost_report, ctos_cost, peak_memory
from .data import (
    Dataset,
    Partition,
    load_csv,
    partition_iid,
    partition_noniid,
    save_csv,
    synth_gaussian,
)
from .estimator import FederatedPVTClassifier
from .freezing import FreezePlan, Scheme, SchemeConfig, expected_coverage, make_plan
from .harness import ExperimentConfig, parse_config, run_experiment
from .nn import (
    Block,
    BlockSpec,
    GradientBundle,
    ModelState,
    backward,
    finite_diff_grad,
    forward,
    init_model,
    predict_logits,
)
from .server import (
    AggregateDelta,
    Budgets,
    EscalationResult,
    RoundConfig,
    aggregate,
    apply_delta,
    escalate,
    evaluate,
    run_round,
)
from .taxonomy import (
    FreezabilityPolicy,
    VarClass,
    VariableDescriptor,
    classify,
    cost_tier,
    freezable_ids,
)
from .wire import decode, encode

__version__ = "0.1.0"

__all__ = [
    "AggregateDelta",
    "Block",
    "BlockSpec",
    "Budgets",
    "ClientConfig",
    "ClientUpdate",
    "CostReport",
    "Dataset",
    "DivergenceError",
    "EscalationResult",
    "ExperimentConfig",
    "FederatedPVTClassifier",
    "FreezabilityPolicy",
    "FreezePlan",
    "GradientBundle",
    "ModelState",
    "Partition",
    "RoundConfig",
    "Scheme",
    "SchemeConfig",
    "VarClass",
    "VariableDescriptor",
    "aggregate",
    "apply_delta",
    "backward",
    "classify",
    "cost_report",
    "cost_tier",
    "ctos_cost",
    "decode",
    "encode",
    "escalate",
    "evaluate",
    "expected_coverage",
    "finite_diff_grad",
    "forward",
    "freezable_ids",
    "init_model",
    "load_csv",
    "local_train",
    "make_plan",
    "measure_costs",
    "parse_config",
    "partition_iid",
    "partition_noniid",
    "peak_memory",
    "predict_logits",
    "run_experiment",
    "run_round",
    "save_csv",
    "synth_gaussian",
]
