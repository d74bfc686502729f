from __future__ import annotations

import json
from dataclasses import dataclass

from .aggregators import LAYER_AGGS, NODE_AGGS, SKIPS, LayerAgg, NodeAgg, Skip


class GenotypeError(ValueError):
    pass


def _parse(enum_cls, name: str, where: str):
    try:
        return enum_cls(name)
    except ValueError:
        legal = ", ".join(e.value for e in enum_cls)
        raise GenotypeError(f"{where}: unknown operation {name!r}; legal names: {legal}") from None


@dataclass(frozen=True)
class Genotype:
    """One discrete architecture: a node aggregator and a skip op per layer, one layer aggregator."""

    node_ops: tuple[NodeAgg, ...]
    skip_ops: tuple[Skip, ...]
    layer_op: LayerAgg

    def __post_init__(self):
        if len(self.node_ops) != len(self.skip_ops) or not self.node_ops:
            raise GenotypeError(
                f"node_ops ({len(self.node_ops)}) and skip_ops ({len(self.skip_ops)}) must have equal positive length"
            )

    @property
    def K(self) -> int:
        return len(self.node_ops)

    def indices(self) -> tuple[list[int], list[int], int]:
        return (
            [NODE_AGGS.index(o) for o in self.node_ops],
            [SKIPS.index(o) for o in self.skip_ops],
            LAYER_AGGS.index(self.layer_op),
        )

    def to_dict(self, **provenance) -> dict:
        d = {
            "node_ops": [o.value for o in self.node_ops],
            "skip_ops": [o.value for o in self.skip_ops],
            "layer_op": self.layer_op.value,
            "K": self.K,
        }
        if provenance:
            d["provenance"] = provenance
        return d

    def to_json(self, **provenance) -> str:
        return json.dumps(self.to_dict(**provenance), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "Genotype":
        try:
            node, skip, layer = d["node_ops"], d["skip_ops"], d["layer_op"]
        except (KeyError, TypeError) as e:
            raise GenotypeError(f"genotype is missing key {e}") from None
        g = cls(
            tuple(_parse(NodeAgg, n, f"node_ops[{i}]") for i, n in enumerate(node)),
            tuple(_parse(Skip, s, f"skip_ops[{i}]") for i, s in enumerate(skip)),
            _parse(LayerAgg, layer, "layer_op"),
        )
        if "K" in d and d["K"] != g.K:
            raise GenotypeError(f"K={d['K']} disagrees with {g.K} listed layers")
        return g

    @classmethod
    def from_json(cls, text: str) -> "Genotype":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as e:
            raise GenotypeError(f"genotype file is not valid JSON: {e}") from None

    def __str__(self) -> str:
        layers = " > ".join(f"{n.value}/{s.value}" for n, s in zip(self.node_ops, self.skip_ops))
        return f"{layers} | {self.layer_op.value}"
