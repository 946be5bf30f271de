"""Variable taxonomy: the three variable classes and the freezable/non-freezable split.

Every trainable variable in the simulator's block networks is one of three
classes, which determine both its backward-pass activation-buffer footprint
and its share of the upload payload:

* additive vectors (biases): no buffered input needed for their gradient,
  negligible bytes on the wire,
* multiplicative vectors (per-channel scales): gradient needs the scaled
  input buffered, negligible bytes,
* multiplicative matrices (weight matrices): gradient needs the layer input
  buffered, dominate bytes.

By default only the multiplicative classes are freezable; additive vectors
are always trained.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


class VarClass(Enum):
    ADDITIVE_VECTOR = "additive_vector"
    MULTIPLICATIVE_VECTOR = "multiplicative_vector"
    MULTIPLICATIVE_MATRIX = "multiplicative_matrix"


BYTES_PER_PARAM = 4  # payload accounting unit: float32


@dataclass(frozen=True)
class VariableDescriptor:
    """Identity, class and size of one trainable variable."""

    var_id: int
    var_class: VarClass
    shape: tuple[int, ...]

    @property
    def param_count(self) -> int:
        n = 1
        for d in self.shape:
            n *= d
        return n

    @property
    def byte_size(self) -> int:
        return self.param_count * BYTES_PER_PARAM


@dataclass(frozen=True)
class FreezabilityPolicy:
    """Which variable classes are eligible for freezing."""

    freezable_classes: frozenset[VarClass] = field(
        default_factory=lambda: frozenset(
            {VarClass.MULTIPLICATIVE_VECTOR, VarClass.MULTIPLICATIVE_MATRIX}
        )
    )


# per-block slot order: weight, scale, bias
_SLOT_CLASSES = (
    VarClass.MULTIPLICATIVE_MATRIX,
    VarClass.MULTIPLICATIVE_VECTOR,
    VarClass.ADDITIVE_VECTOR,
)
SLOTS_PER_BLOCK = len(_SLOT_CLASSES)


def classify(model) -> list[VariableDescriptor]:
    """Build descriptors for every variable of a block model.

    Ids are dense and assigned per block in slot order (weight, scale, bias),
    so block ``i`` owns ids ``3i``, ``3i+1``, ``3i+2``. Classification depends
    only on the slot, never on parameter values.
    """
    descriptors = []
    for i, blk in enumerate(model.blocks):
        for j, (var_class, value) in enumerate(
            zip(_SLOT_CLASSES, (blk.weight, blk.scale, blk.bias))
        ):
            descriptors.append(
                VariableDescriptor(
                    var_id=SLOTS_PER_BLOCK * i + j,
                    var_class=var_class,
                    shape=tuple(value.shape),
                )
            )
    return descriptors


def freezable_ids(
    descriptors: list[VariableDescriptor],
    policy: FreezabilityPolicy = FreezabilityPolicy(),
) -> list[int]:
    """Ids eligible for freezing under ``policy``, ascending."""
    return sorted(d.var_id for d in descriptors if d.var_class in policy.freezable_classes)


def cost_tier(var_class: VarClass) -> tuple[str, str]:
    """(memory tier, communication tier) of a variable class.

    Memory is High iff the class buffers activations for its gradient;
    communication is High iff the class dominates parameter bytes.
    """
    return {
        VarClass.ADDITIVE_VECTOR: ("Low", "Low"),
        VarClass.MULTIPLICATIVE_VECTOR: ("High", "Low"),
        VarClass.MULTIPLICATIVE_MATRIX: ("High", "High"),
    }[var_class]
