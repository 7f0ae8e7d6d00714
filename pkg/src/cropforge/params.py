"""Named parameter store, initialization and the SGD update."""
from __future__ import annotations

import hashlib
from typing import Iterable, Iterator

import numpy as np

from .autodiff import Tensor
from .errors import ParameterError, TrainingStateError

SALIENCY = "saliency"
REGRESSION = "regression"
GROUPS = (SALIENCY, REGRESSION)


class ModelParams:
    """Ordered mapping ``name -> Tensor`` where every entry belongs to one group.

    Names are prefixed by their group (``sal.`` or ``reg.``) so a checkpoint
    alone is enough to restore the grouping.
    """

    _PREFIX = {SALIENCY: "sal.", REGRESSION: "reg."}

    def __init__(self):
        self._tensors: dict[str, Tensor] = {}
        self._groups: dict[str, str] = {}
        self.frozen: set[str] = set()

    def add(self, name: str, data: np.ndarray, group: str) -> Tensor:
        if group not in GROUPS:
            raise ParameterError(f"unknown parameter group {group!r}")
        if name in self._tensors:
            raise ParameterError(f"duplicate parameter {name!r}")
        if not name.startswith(self._PREFIX[group]):
            raise ParameterError(f"parameter {name!r} must start with {self._PREFIX[group]!r}")
        t = Tensor(data, requires_grad=True, name=name)
        self._tensors[name] = t
        self._groups[name] = group
        return t

    @staticmethod
    def group_of_name(name: str) -> str:
        for group, prefix in ModelParams._PREFIX.items():
            if name.startswith(prefix):
                return group
        raise ParameterError(f"cannot infer group of parameter {name!r}")

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def names(self, group: str | None = None) -> list[str]:
        return [n for n in self._tensors if group is None or self._groups[n] == group]

    def group(self, name: str) -> str:
        return self._groups[name]

    def freeze(self, *groups: str) -> None:
        self.frozen.update(groups)

    def unfreeze(self, *groups: str) -> None:
        self.frozen.difference_update(groups)

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.grad = None

    def merge(self, other: "ModelParams") -> "ModelParams":
        for name, t in other.items():
            self.add(name, t.data, other.group(name))
        return self

    def copy(self) -> "ModelParams":
        dup = ModelParams()
        for name, t in self.items():
            dup.add(name, t.data.copy(), self._groups[name])
        dup.frozen = set(self.frozen)
        return dup

    def checksum(self, group: str | None = None) -> str:
        h = hashlib.sha256()
        for name in self.names(group):
            h.update(name.encode())
            h.update(self._tensors[name].data.tobytes())
        return h.hexdigest()

    def count(self, group: str | None = None) -> int:
        return sum(self._tensors[n].size for n in self.names(group))


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def clip_grad_norm(params: ModelParams, max_norm: float, groups: Iterable[str] | None = None) -> float:
    """Rescale gradients of ``groups`` so their joint L2 norm is at most ``max_norm``.

    Returns the norm measured before clipping.
    """
    active = set(GROUPS if groups is None else groups)
    grads = [params[n].grad for n in params if params.group(n) in active and params[n].grad is not None]
    norm = float(np.sqrt(sum(float(np.dot(g.ravel(), g.ravel())) for g in grads)))
    if norm > max_norm:
        factor = max_norm / norm
        for g in grads:
            g *= factor
    return norm


def sgd_step(params: ModelParams, learning_rate: float, groups: Iterable[str] | None = None) -> ModelParams:
    """In-place ``p -= lr * grad`` for parameters in ``groups`` that are not frozen.

    All gradients are cleared afterwards. Returns ``params`` for chaining.
    """
    if not learning_rate >= 0:
        raise ParameterError(f"learning rate must be non-negative, got {learning_rate}")
    active = set(GROUPS if groups is None else groups) - params.frozen
    names = [n for n in params if params.group(n) in active]
    missing = [n for n in names if params[n].grad is None]
    if missing:
        raise TrainingStateError(f"no gradient accumulated for {', '.join(missing[:5])}")
    if learning_rate > 0:
        for n in names:
            t = params[n]
            t.data -= learning_rate * t.grad
    params.zero_grad()
    return params
