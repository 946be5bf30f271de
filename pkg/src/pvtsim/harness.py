"""Experiment driver: config files, the round loop, metrics CSV, ablations.

Config files are flat ``key = value`` text (comments with '#', blank lines
ignored); every key is listed in CONFIG_KEYS. Everything an experiment does
is keyed off master_seed, so a (config, seed) pair pins the entire metrics
stream bit-for-bit — except the wall_ms column, which records measured time
and is exempt from determinism guarantees.

The metrics CSV has one row per evaluation point with the fixed header

    round,train_loss,eval_loss,eval_accuracy,ctos_bytes_mean,
    peak_memory_bytes,coverage_fraction,wall_ms

(one line). Floats are written with repr so rows parse back losslessly.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .client import ClientConfig
from .data import Dataset, Partition, load_csv, partition_iid, partition_noniid, synth_gaussian
from .freezing import Scheme, SchemeConfig
from .nn import BlockSpec, ModelState, init_model
from .server import (
    Budgets,
    EscalationResult,
    RoundConfig,
    escalate,
    run_round,
)


class ConfigError(ValueError):
    """Invalid experiment config; the message names the offending field."""


@dataclass(frozen=True)
class ExperimentConfig:
    # model
    hidden_dims: tuple[int, ...] = (16, 16, 16, 16)
    # data: synthetic blobs or CSV files
    data: str = "synth"  # "synth" | "csv"
    classes: int = 4
    features: int = 16
    per_class: int = 192
    separation: float = 3.0
    eval_per_class: int = 64
    csv_path: str = ""
    eval_csv: str = ""
    eval_fraction: float = 0.2  # csv mode without eval_csv: held-out tail
    # partitioning
    partition: str = "iid"  # "iid" | "dirichlet"
    alpha: float = 0.5
    num_clients: int = 128
    # freezing
    scheme: str = "pcpr"  # "fixed" | "pr" | "pcpr"
    freeze_fraction: float = 0.9
    # federated loop
    clients_per_round: int = 32
    local_steps: int = 5
    batch_size: int = 16
    client_lr: float = 0.3
    server_lr: float = 1.0
    rounds: int = 150
    eval_every: int = 5
    master_seed: int = 0
    out_csv: str = "metrics.csv"
    # ablate / escalate extras
    target_loss: float | None = None
    memory_budget: int | None = None
    ctos_budget: int | None = None
    max_local_steps: int = 20
    max_clients: int = 128
    gap_tolerance: float = 0.02

    def validate(self) -> "ExperimentConfig":
        if self.data not in ("synth", "csv"):
            raise ConfigError(f"data: must be 'synth' or 'csv', got {self.data!r}")
        if self.data == "csv" and not self.csv_path:
            raise ConfigError("csv_path: required when data = csv")
        if self.partition not in ("iid", "dirichlet"):
            raise ConfigError(
                f"partition: must be 'iid' or 'dirichlet', got {self.partition!r}"
            )
        if self.partition == "dirichlet" and self.alpha <= 0:
            raise ConfigError("alpha: must be > 0")
        if self.scheme not in ("fixed", "pr", "pcpr"):
            raise ConfigError(f"scheme: must be fixed, pr or pcpr, got {self.scheme!r}")
        if not 0.0 <= self.freeze_fraction <= 1.0:
            raise ConfigError("freeze_fraction: must be in [0, 1]")
        for name in (
            "classes",
            "features",
            "per_class",
            "eval_per_class",
            "num_clients",
            "clients_per_round",
            "local_steps",
            "batch_size",
            "rounds",
            "eval_every",
        ):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be a positive count")
        if self.clients_per_round > self.num_clients:
            raise ConfigError("clients_per_round: exceeds num_clients")
        if self.client_lr < 0 or self.server_lr < 0:
            raise ConfigError("client_lr/server_lr: must be >= 0")
        if self.master_seed < 0:
            raise ConfigError("master_seed: must be >= 0")
        if any(h < 1 for h in self.hidden_dims):
            raise ConfigError("hidden_dims: entries must be >= 1")
        return self


_REQUIRED_KEYS = ("rounds", "master_seed")

_SCHEMES = {
    "fixed": Scheme.FIXED,
    "pr": Scheme.PER_ROUND,
    "pcpr": Scheme.PER_CLIENT_PER_ROUND,
}


def _parse_value(name: str, kind, raw: str):
    try:
        if kind == "hidden_dims":
            return tuple(int(v) for v in raw.split(",") if v.strip()) if raw else ()
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from None


_FIELD_KINDS = {
    "hidden_dims": "hidden_dims",
    "data": str,
    "classes": int,
    "features": int,
    "per_class": int,
    "separation": float,
    "eval_per_class": int,
    "csv_path": str,
    "eval_csv": str,
    "eval_fraction": float,
    "partition": str,
    "alpha": float,
    "num_clients": int,
    "scheme": str,
    "freeze_fraction": float,
    "clients_per_round": int,
    "local_steps": int,
    "batch_size": int,
    "client_lr": float,
    "server_lr": float,
    "rounds": int,
    "eval_every": int,
    "master_seed": int,
    "out_csv": str,
    "target_loss": float,
    "memory_budget": int,
    "ctos_budget": int,
    "max_local_steps": int,
    "max_clients": int,
    "gap_tolerance": float,
}

CONFIG_KEYS = tuple(_FIELD_KINDS)


def parse_config_text(text: str) -> ExperimentConfig:
    values = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in _FIELD_KINDS:
            raise ConfigError(f"{key}: unknown config key (line {line_no})")
        if key in values:
            raise ConfigError(f"{key}: duplicated (line {line_no})")
        values[key] = _parse_value(key, _FIELD_KINDS[key], raw)
    for key in _REQUIRED_KEYS:
        if key not in values:
            raise ConfigError(f"{key}: required key missing")
    return ExperimentConfig(**values).validate()


def parse_config(path: str | Path) -> ExperimentConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


@dataclass
class MetricsRow:
    round: int
    train_loss: float
    eval_loss: float
    eval_accuracy: float
    ctos_bytes_mean: float
    peak_memory_bytes: float
    coverage_fraction: float
    wall_ms: float


METRICS_HEADER = tuple(f.name for f in fields(MetricsRow))


def metrics_to_csv(rows: list[MetricsRow]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(METRICS_HEADER)
    for row in rows:
        writer.writerow(
            [row.round]
            + [repr(getattr(row, name)) for name in METRICS_HEADER[1:]]
        )
    return out.getvalue()


def metrics_from_csv(text: str) -> list[MetricsRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != METRICS_HEADER:
        raise ValueError(f"unexpected metrics header {header}")
    return [
        MetricsRow(int(row[0]), *(float(v) for v in row[1:])) for row in reader
    ]


def strip_wall_ms(csv_text: str) -> str:
    """Metrics CSV with the measured-time column removed.

    Every other column is covered by the determinism guarantee; this is the
    canonical form for comparing runs byte-for-byte.
    """
    lines = []
    for row in csv.reader(io.StringIO(csv_text)):
        if row:
            lines.append(",".join(row[:-1]))
    return "\n".join(lines) + "\n"


def build_datasets(config: ExperimentConfig) -> tuple[Dataset, Dataset]:
    """(train, eval) pair for the configured source."""
    if config.data == "synth":
        train = synth_gaussian(
            config.classes,
            config.features,
            config.per_class,
            config.separation,
            seed=config.master_seed,
        )
        evaluation = synth_gaussian(
            config.classes,
            config.features,
            config.eval_per_class,
            config.separation,
            seed=config.master_seed + 1,
        )
        return train, evaluation
    full = load_csv(config.csv_path)
    if config.eval_csv:
        return full, load_csv(config.eval_csv)
    rng = np.random.default_rng(np.random.SeedSequence([config.master_seed, 9]))
    order = rng.permutation(len(full))
    n_eval = max(1, int(config.eval_fraction * len(full)))
    if n_eval >= len(full):
        raise ConfigError("eval_fraction: leaves no training data")
    eval_idx, train_idx = order[:n_eval], order[n_eval:]
    return (
        Dataset(full.features[train_idx], full.labels[train_idx]),
        Dataset(full.features[eval_idx], full.labels[eval_idx]),
    )


def build_partition(config: ExperimentConfig, train: Dataset) -> Partition:
    if config.partition == "iid":
        return partition_iid(train, config.num_clients, seed=config.master_seed)
    return partition_noniid(
        train, config.num_clients, config.alpha, seed=config.master_seed
    )


def build_model(config: ExperimentConfig, train: Dataset) -> ModelState:
    dims = [train.n_features, *config.hidden_dims, train.n_classes]
    specs = [
        BlockSpec(dims[i], dims[i + 1], "relu" if i + 2 < len(dims) else "identity")
        for i in range(len(dims) - 1)
    ]
    return init_model(specs, seed=config.master_seed)


def build_round_config(config: ExperimentConfig) -> RoundConfig:
    return RoundConfig(
        clients_per_round=config.clients_per_round,
        scheme_cfg=SchemeConfig(
            scheme=_SCHEMES[config.scheme],
            freeze_fraction=config.freeze_fraction,
            master_seed=config.master_seed,
        ),
        client_cfg=ClientConfig(
            local_steps=config.local_steps,
            batch_size=config.batch_size,
            learning_rate=config.client_lr,
        ),
        server_lr=config.server_lr,
    )


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    model: ModelState
    rows: list[MetricsRow]
    rounds_to_target: int | None  # first eval round at/below the target loss

    @property
    def final(self) -> MetricsRow:
        return self.rows[-1]


def run_experiment(
    config: ExperimentConfig, stop_at_loss: float | None = None
) -> ExperimentResult:
    """Run the configured federated experiment and collect metric rows.

    With ``stop_at_loss``, stops at the first evaluation point whose eval
    loss is at or below the target (the rounds-to-target measurement used
    by ablations).
    """
    config.validate()
    train, evaluation = build_datasets(config)
    partition = build_partition(config, train)
    model = build_model(config, train)
    round_cfg = build_round_config(config)

    rows: list[MetricsRow] = []
    rounds_to_target = None
    clock = time.perf_counter()
    for r in range(config.rounds):
        is_eval = (r + 1) % config.eval_every == 0 or r == config.rounds - 1
        model, metrics = run_round(
            model, r, round_cfg, train, partition,
            eval_data=evaluation if is_eval else None,
        )
        if is_eval:
            now = time.perf_counter()
            rows.append(
                MetricsRow(
                    round=r + 1,
                    train_loss=metrics.train_loss,
                    eval_loss=metrics.eval_loss,
                    eval_accuracy=metrics.eval_accuracy,
                    ctos_bytes_mean=metrics.ctos_bytes_mean,
                    peak_memory_bytes=metrics.peak_memory_bytes_mean,
                    coverage_fraction=metrics.coverage_fraction,
                    wall_ms=(now - clock) * 1e3,
                )
            )
            clock = now
            if stop_at_loss is not None and metrics.eval_loss <= stop_at_loss:
                rounds_to_target = r + 1
                break
    return ExperimentResult(config, model, rows, rounds_to_target)


ABLATE_AXES = ("scheme", "local_steps", "clients")

ABLATE_HEADER = (
    "axis",
    "value",
    "target_loss",
    "rounds_to_target",
    "final_eval_loss",
    "final_eval_accuracy",
    "final_ctos_bytes_mean",
    "final_peak_memory_bytes",
)


def _with_axis(config: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    if axis == "scheme":
        return replace(config, scheme=str(value))
    if axis == "local_steps":
        return replace(config, local_steps=int(value))
    if axis == "clients":
        return replace(config, clients_per_round=int(value))
    raise ConfigError(f"axis: must be one of {ABLATE_AXES}, got {axis!r}")


def resolve_target_loss(config: ExperimentConfig) -> float:
    """Configured target, or the all-variable reference loss plus 2%."""
    if config.target_loss is not None:
        return config.target_loss
    reference = run_experiment(replace(config, freeze_fraction=0.0))
    return reference.final.eval_loss * 1.02


def ablate(config: ExperimentConfig, axis: str, values: list) -> list[dict]:
    """One experiment per axis value, shared seeds; rounds-to-target table."""
    if not values:
        raise ConfigError("values: must be non-empty")
    if axis not in ABLATE_AXES:
        raise ConfigError(f"axis: must be one of {ABLATE_AXES}, got {axis!r}")
    target = resolve_target_loss(config)
    table = []
    for value in values:
        result = run_experiment(_with_axis(config, axis, value), stop_at_loss=target)
        table.append(
            {
                "axis": axis,
                "value": value,
                "target_loss": target,
                "rounds_to_target": result.rounds_to_target
                if result.rounds_to_target is not None
                else -1,
                "final_eval_loss": result.final.eval_loss,
                "final_eval_accuracy": result.final.eval_accuracy,
                "final_ctos_bytes_mean": result.final.ctos_bytes_mean,
                "final_peak_memory_bytes": result.final.peak_memory_bytes,
            }
        )
    return table


def ablate_to_csv(table: list[dict]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(ABLATE_HEADER)
    for row in table:
        writer.writerow([row[k] for k in ABLATE_HEADER])
    return out.getvalue()


def run_escalation(config: ExperimentConfig) -> EscalationResult:
    """Drive the server escalation procedure with full experiment runs."""
    if config.memory_budget is None:
        raise ConfigError("memory_budget: required for escalate")
    if config.ctos_budget is None:
        raise ConfigError("ctos_budget: required for escalate")
    if config.max_clients > config.num_clients:
        raise ConfigError("max_clients: exceeds num_clients")
    train, _ = build_datasets(config)
    model = build_model(config, train)

    def evaluator(fraction: float, local_steps: int, clients: int) -> float:
        result = run_experiment(
            replace(
                config,
                freeze_fraction=fraction,
                local_steps=local_steps,
                clients_per_round=clients,
            )
        )
        return result.final.eval_accuracy

    return escalate(
        Budgets(
            peak_memory_bytes=config.memory_budget,
            ctos_bytes=config.ctos_budget,
            max_local_steps=config.max_local_steps,
            max_clients=config.max_clients,
        ),
        evaluator,
        descriptors=model.descriptors,
        specs=[blk.spec for blk in model.blocks],
        batch_size=config.batch_size,
        base_local_steps=config.local_steps,
        base_clients=config.clients_per_round,
        tolerance=config.gap_tolerance,
    )
