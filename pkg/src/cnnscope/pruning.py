"""Filter-merge pruning: remove redundant filters, fold weights downstream.

Removing filter j in favor of filter i is exact when their activations agree:
the next layer's weights for channel j are added onto channel i, the removed
filter's kernel slice and bias are deleted, and the network output is
unchanged up to floating-point reassociation.  Multi-member groups merge all
removed channels into the kept one.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, replace

import numpy as np

from .network import Conv, ConvLayer, DenseLayer, Network
from .similarity import SimilarityReport


class PruneError(ValueError):
    pass


@dataclass(frozen=True)
class Merge:
    keep: int
    remove: tuple[int, ...]

    def __post_init__(self):
        if self.keep in self.remove:
            raise PruneError("keep index cannot be removed")
        if not self.remove:
            raise PruneError("merge removes nothing")
        if list(self.remove) != sorted(set(self.remove)):
            raise PruneError("remove set must be sorted and unique")


@dataclass(frozen=True)
class PrunePlan:
    layer_id: int
    merges: tuple[Merge, ...]
    created_at_step: int

    def __post_init__(self):
        seen: set[int] = set()
        for m in self.merges:
            touched = {m.keep, *m.remove}
            if touched & seen:
                raise PruneError("merges must be pairwise disjoint")
            seen |= touched

    @property
    def removed(self) -> tuple[int, ...]:
        return tuple(sorted(i for m in self.merges for i in m.remove))

    def to_jsonable(self) -> dict:
        return {
            "layer": self.layer_id,
            "merges": [{"keep": m.keep, "remove": list(m.remove)} for m in self.merges],
            "created_at_step": self.created_at_step,
        }

    @classmethod
    def from_jsonable(cls, obj: dict) -> "PrunePlan":
        return cls(
            layer_id=obj["layer"],
            merges=tuple(Merge(keep=m["keep"], remove=tuple(m["remove"])) for m in obj["merges"]),
            created_at_step=obj["created_at_step"],
        )


def plan_prune(report: SimilarityReport) -> PrunePlan:
    """One merge per similarity group: keep the representative, remove the rest."""
    if not report.groups:
        raise PruneError("nothing to prune")
    merges = tuple(
        Merge(keep=g.keep, remove=tuple(i for i in g.members if i != g.keep))
        for g in report.groups
    )
    return PrunePlan(layer_id=report.layer_id, merges=merges, created_at_step=report.step)


def _copy_layers(net: Network) -> list:
    out = []
    for layer in net.layers:
        if isinstance(layer, ConvLayer):
            out.append(ConvLayer(layer.kernel.copy(), layer.bias.copy()))
        elif isinstance(layer, DenseLayer):
            out.append(DenseLayer(layer.weight.copy(), layer.bias.copy(), layer.activation))
        else:
            out.append(copy.copy(layer))
    return out


def apply_prune(net: Network, plan: PrunePlan) -> Network:
    """Return a new network with the plan's filters removed and folded downstream.

    The kept filter's own weights and bias are untouched; the removed filters'
    biases are discarded.  Works for a following conv layer (channel merge) or
    a following dense layer (row merge through the row-major flatten map).
    """
    if not 0 <= plan.layer_id < len(net.conv_ids):
        raise PruneError("cannot prune classifier")
    layer_idx = net.conv_ids[plan.layer_id]
    f = net.layers[layer_idx].filters
    for m in plan.merges:
        for idx in (m.keep, *m.remove):
            if not 0 <= idx < f:
                raise IndexError(f"filter index {idx} out of range for {f} filters")
    removed = list(plan.removed)

    layers = _copy_layers(net)
    target = layers[layer_idx]
    target.kernel = np.delete(target.kernel, removed, axis=3)
    target.bias = np.delete(target.bias, removed)

    downstream = None
    for j in range(layer_idx + 1, len(layers)):
        if isinstance(layers[j], (ConvLayer, DenseLayer)):
            downstream = layers[j]
            break
    if downstream is None:
        raise PruneError("cannot prune classifier")

    if isinstance(downstream, ConvLayer):
        # pooling between the layers is channel-wise, so channel r here is filter r upstream
        for m in plan.merges:
            downstream.kernel[:, :, m.keep, :] += downstream.kernel[:, :, list(m.remove), :].sum(axis=2)
        downstream.kernel = np.delete(downstream.kernel, removed, axis=2)
    else:
        # flatten is row-major: flat index = position * f + filter
        in_dim, units = downstream.weight.shape
        spatial = in_dim // f
        view = downstream.weight.reshape(spatial, f, units)
        for m in plan.merges:
            view[:, m.keep, :] += view[:, list(m.remove), :].sum(axis=1)
        downstream.weight = np.delete(view, removed, axis=1).reshape(spatial * (f - len(removed)), units)

    new_layer_specs = list(net.spec.layers)
    conv_positions = [i for i, ls in enumerate(net.spec.layers) if isinstance(ls, Conv)]
    pos = conv_positions[plan.layer_id]
    new_layer_specs[pos] = Conv(filters=f - len(removed), window=net.spec.layers[pos].window)
    new_spec = replace(net.spec, layers=tuple(new_layer_specs))
    return Network(new_spec, layers, step_counter=net.step_counter)


def parameter_count(net: Network) -> int:
    return sum(p.size for layer in net.layers for p in layer.params().values())
