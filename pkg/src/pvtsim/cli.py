"""Command-line driver: run / ablate / escalate.

    pvtsim run      --config exp.cfg [--out metrics.csv] [--seed 7]
    pvtsim ablate   --config exp.cfg --axis local_steps --values 1,5,20 [--out table.csv]
    pvtsim escalate --config exp.cfg [--out chosen.cfg]

--seed overrides master_seed from the config; --out overrides the output
path. Exits 0 on success, 2 on a config problem (message names the field),
1 otherwise.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .harness import (
    ABLATE_AXES,
    ConfigError,
    ExperimentConfig,
    ablate,
    ablate_to_csv,
    metrics_to_csv,
    parse_config,
    run_escalation,
    run_experiment,
)
from .server import EscalationInfeasibleError


def _load(args) -> ExperimentConfig:
    config = parse_config(args.config)
    if args.seed is not None:
        config = replace(config, master_seed=args.seed).validate()
    return config


def _cmd_run(args) -> int:
    config = _load(args)
    result = run_experiment(config)
    out = Path(args.out if args.out else config.out_csv)
    out.write_text(metrics_to_csv(result.rows), encoding="utf-8")
    final = result.final
    print(
        f"round {final.round}: eval_loss={final.eval_loss:.6f} "
        f"eval_accuracy={final.eval_accuracy:.4f} "
        f"ctos_bytes_mean={final.ctos_bytes_mean:.1f} "
        f"peak_memory_bytes={final.peak_memory_bytes:.1f} -> {out}"
    )
    return 0


def _cmd_ablate(args) -> int:
    config = _load(args)
    values: list = [v.strip() for v in args.values.split(",") if v.strip()]
    if args.axis in ("local_steps", "clients"):
        values = [int(v) for v in values]
    table = ablate(config, args.axis, values)
    text = ablate_to_csv(table)
    out = Path(args.out) if args.out else Path(f"ablate_{args.axis}.csv")
    out.write_text(text, encoding="utf-8")
    print(text, end="")
    print(f"-> {out}")
    return 0


def _cmd_escalate(args) -> int:
    config = _load(args)
    chosen = run_escalation(config)
    lines = [
        f"freeze_fraction = {chosen.freeze_fraction}",
        f"local_steps = {chosen.local_steps}",
        f"clients_per_round = {chosen.clients_per_round}",
        f"restored = {chosen.restored}",
        f"metric = {chosen.metric!r}",
        f"reference_metric = {chosen.reference_metric!r}",
    ]
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"-> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pvtsim",
        description="Federated partial-variable-training simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="flat key=value config file")
        p.add_argument("--out", default=None, help="output path override")
        p.add_argument("--seed", type=int, default=None, help="master_seed override")

    p_run = sub.add_parser("run", help="run one experiment, write metrics CSV")
    common(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_ablate = sub.add_parser("ablate", help="sweep one axis, write comparison CSV")
    common(p_ablate)
    p_ablate.add_argument("--axis", required=True, choices=ABLATE_AXES)
    p_ablate.add_argument("--values", required=True, help="comma-separated values")
    p_ablate.set_defaults(func=_cmd_ablate)

    p_esc = sub.add_parser(
        "escalate", help="choose hyperparameters under resource budgets"
    )
    common(p_esc)
    p_esc.set_defaults(func=_cmd_escalate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (EscalationInfeasibleError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
