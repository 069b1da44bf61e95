"""Tiny parameter container shared by the model components."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .autodiff import Parameter


class Module:
    def __init__(self, prefix: str):
        self.prefix = prefix
        self._params: dict[str, Parameter] = {}
        self._children: list[Module] = []

    def add_param(self, local_name: str, array: np.ndarray) -> Parameter:
        name = f"{self.prefix}.{local_name}" if self.prefix else local_name
        p = Parameter(name, array)
        self._params[local_name] = p
        return p

    def add_child(self, module: "Module") -> "Module":
        self._children.append(module)
        return module

    def named_parameters(self) -> Iterator[tuple[str, Parameter]]:
        for p in self._params.values():
            yield p.name, p
        for child in self._children:
            yield from child.named_parameters()

    def parameters(self) -> dict[str, Parameter]:
        return dict(self.named_parameters())

    def zero_grad(self) -> None:
        for _, p in self.named_parameters():
            p.zero_grad()
