"""Analytic per-client-round cost accounting: peak training memory and upload bytes.

Memory is modeled, not measured. The model is additive:

    peak  = param_bytes + activation_buffer_bytes + workspace_bytes
    fprop = param_bytes + workspace_bytes

where activation_buffer_bytes charges 4 bytes per buffered float exactly as
the backward pass counts them (trained weight: batch*in_dim floats, trained
scale: batch*out_dim, bias: none), and workspace_bytes is a plan-independent
transit term: one batch-sized gradient of the widest block plus one bit per
relu unit for sign masks,

    workspace = 4 * batch * max(out_dim) + ceil(batch * sum(out_dim) / 8).

Upload cost is the exact encoded size of the sparse-delta frame: 4 payload
bytes per trained parameter plus framing overhead (20-byte header, 4-byte
checksum, 8 bytes per entry). The arithmetic here must stay in lockstep
with the wire layout; tests pin the agreement against real encodings.
"""

from __future__ import annotations

from dataclasses import dataclass

from .freezing import FreezePlan
from .nn import BlockSpec
from .taxonomy import SLOTS_PER_BLOCK, VariableDescriptor

FRAME_FIXED_BYTES = 24  # header (20) + checksum (4)
ENTRY_OVERHEAD_BYTES = 8  # var id (4) + payload length (4)


@dataclass(frozen=True)
class CostReport:
    param_bytes: int
    activation_buffer_bytes: int
    workspace_bytes: int
    ctos_bytes: int

    @property
    def peak_memory_bytes(self) -> int:
        return self.param_bytes + self.activation_buffer_bytes + self.workspace_bytes

    @property
    def fprop_bytes(self) -> int:
        return self.param_bytes + self.workspace_bytes


def param_bytes(descriptors: list[VariableDescriptor]) -> int:
    return sum(d.byte_size for d in descriptors)


def activation_buffer_bytes(
    plan: FreezePlan, specs: list[BlockSpec], batch_size: int
) -> int:
    total = 0
    for i, spec in enumerate(specs):
        weight_id = SLOTS_PER_BLOCK * i
        if weight_id in plan.trained:
            total += batch_size * spec.in_dim
        if weight_id + 1 in plan.trained:
            total += batch_size * spec.out_dim
    return 4 * total


def workspace_bytes(specs: list[BlockSpec], batch_size: int) -> int:
    widest = max(spec.out_dim for spec in specs)
    mask_bits = batch_size * sum(spec.out_dim for spec in specs)
    return 4 * batch_size * widest + (mask_bits + 7) // 8


def frame_overhead_bytes(n_entries: int) -> int:
    return FRAME_FIXED_BYTES + ENTRY_OVERHEAD_BYTES * n_entries


def ctos_cost(plan: FreezePlan, descriptors: list[VariableDescriptor]) -> int:
    """Exact client-to-server payload bytes for one round's update frame."""
    by_id = {d.var_id: d for d in descriptors}
    trained = sorted(plan.trained)
    return sum(by_id[v].byte_size for v in trained) + frame_overhead_bytes(len(trained))


def peak_memory(
    plan: FreezePlan,
    descriptors: list[VariableDescriptor],
    specs: list[BlockSpec],
    batch_size: int,
) -> int:
    return (
        param_bytes(descriptors)
        + activation_buffer_bytes(plan, specs, batch_size)
        + workspace_bytes(specs, batch_size)
    )


def cost_report(
    plan: FreezePlan,
    descriptors: list[VariableDescriptor],
    specs: list[BlockSpec],
    batch_size: int,
) -> CostReport:
    return CostReport(
        param_bytes=param_bytes(descriptors),
        activation_buffer_bytes=activation_buffer_bytes(plan, specs, batch_size),
        workspace_bytes=workspace_bytes(specs, batch_size),
        ctos_bytes=ctos_cost(plan, descriptors),
    )
