"""Adam 优化器（numpy 实现，支持按参数组冻结）。"""
from __future__ import annotations

from typing import Iterable

import numpy as np

from exdos.nn.dagn import DagnParams


class Adam:
    def __init__(
        self,
        params: DagnParams,
        *,
        lr: float,
        groups: Iterable[str] | None = None,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self._params = params
        self._names = params.names(groups)
        self._lr = float(lr)
        self._beta1 = beta1
        self._beta2 = beta2
        self._eps = eps
        self._step = 0
        self._m = {n: np.zeros_like(params[n].data) for n in self._names}
        self._v = {n: np.zeros_like(params[n].data) for n in self._names}

    @property
    def trainable(self) -> list[str]:
        return list(self._names)

    def zero_grad(self) -> None:
        self._params.zero_grad()

    def step(self) -> None:
        """只更新可训练组里拿到梯度的参数；冻结组参数保持原样。"""

        self._step += 1
        b1, b2 = self._beta1, self._beta2
        correction1 = 1.0 - b1**self._step
        correction2 = 1.0 - b2**self._step
        for name in self._names:
            tensor = self._params[name]
            grad = tensor.grad
            if grad is None:
                continue
            m = self._m[name]
            v = self._v[name]
            m *= b1
            m += (1.0 - b1) * grad
            v *= b2
            v += (1.0 - b2) * grad * grad
            tensor.data -= self._lr * (m / correction1) / (np.sqrt(v / correction2) + self._eps)
