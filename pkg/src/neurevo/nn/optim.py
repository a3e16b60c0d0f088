"""Gradient-descent update rules for the eight supported optimizer kinds.

ftrl is accepted in the search space but mapped to plain SGD with a logged
warning; the remaining seven use their standard update rules. Learning rates
are fixed per kind (0.01 for SGD, 0.001 otherwise) and are not evolved.
"""

from __future__ import annotations

import logging

import numpy as np

from ..layertree import OptimizerKind

logger = logging.getLogger(__name__)

DEFAULT_LEARNING_RATES = {kind: 0.001 for kind in OptimizerKind}
DEFAULT_LEARNING_RATES[OptimizerKind.SGD] = 0.01

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8
RHO_RMS = 0.9
RHO_ADADELTA = 0.95
EPS_ADADELTA = 1e-7

_warned_ftrl = False


class Optimizer:
    """Per-network optimizer; state slots are never shared between instances."""

    def __init__(self, kind: OptimizerKind, lr: float | None = None):
        self.kind = kind
        self.lr = DEFAULT_LEARNING_RATES[kind] if lr is None else lr
        self.t = 0
        self._slots: list[dict[str, np.ndarray]] = []
        self._rule = kind
        if kind is OptimizerKind.FTRL:
            global _warned_ftrl
            if not _warned_ftrl:
                logger.warning("ftrl is not implemented; falling back to sgd updates")
                _warned_ftrl = True
            self._rule = OptimizerKind.SGD

    def _slot(self, i: int, param: np.ndarray) -> dict[str, np.ndarray]:
        while len(self._slots) <= i:
            self._slots.append({})
        slot = self._slots[i]
        if not slot:
            if self._rule in (OptimizerKind.ADAM, OptimizerKind.NADAM):
                slot["m"] = np.zeros_like(param)
                slot["v"] = np.zeros_like(param)
            elif self._rule is OptimizerKind.ADAMAX:
                slot["m"] = np.zeros_like(param)
                slot["u"] = np.zeros_like(param)
            elif self._rule is OptimizerKind.RMSPROP:
                slot["v"] = np.zeros_like(param)
            elif self._rule is OptimizerKind.ADAGRAD:
                slot["acc"] = np.zeros_like(param)
            elif self._rule is OptimizerKind.ADADELTA:
                slot["acc_g"] = np.zeros_like(param)
                slot["acc_d"] = np.zeros_like(param)
        return slot

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        """Apply one update in place; deterministic given the call sequence."""
        self.t += 1
        t = self.t
        lr = self.lr
        rule = self._rule
        for i, (p, g) in enumerate(zip(params, grads)):
            g = g.astype(p.dtype, copy=False)
            slot = self._slot(i, p)
            if rule is OptimizerKind.SGD:
                p -= lr * g
            elif rule is OptimizerKind.ADAM:
                m, v = slot["m"], slot["v"]
                m[...] = BETA1 * m + (1 - BETA1) * g
                v[...] = BETA2 * v + (1 - BETA2) * g * g
                mhat = m / (1 - BETA1 ** t)
                vhat = v / (1 - BETA2 ** t)
                p -= lr * mhat / (np.sqrt(vhat) + EPS)
            elif rule is OptimizerKind.NADAM:
                m, v = slot["m"], slot["v"]
                m[...] = BETA1 * m + (1 - BETA1) * g
                v[...] = BETA2 * v + (1 - BETA2) * g * g
                mhat = m / (1 - BETA1 ** (t + 1))
                vhat = v / (1 - BETA2 ** t)
                nesterov = BETA1 * mhat + (1 - BETA1) * g / (1 - BETA1 ** t)
                p -= lr * nesterov / (np.sqrt(vhat) + EPS)
            elif rule is OptimizerKind.ADAMAX:
                m, u = slot["m"], slot["u"]
                m[...] = BETA1 * m + (1 - BETA1) * g
                u[...] = np.maximum(BETA2 * u, np.abs(g))
                p -= (lr / (1 - BETA1 ** t)) * m / (u + EPS)
            elif rule is OptimizerKind.RMSPROP:
                v = slot["v"]
                v[...] = RHO_RMS * v + (1 - RHO_RMS) * g * g
                p -= lr * g / (np.sqrt(v) + EPS)
            elif rule is OptimizerKind.ADAGRAD:
                acc = slot["acc"]
                acc[...] = acc + g * g
                p -= lr * g / (np.sqrt(acc) + EPS)
            elif rule is OptimizerKind.ADADELTA:
                acc_g, acc_d = slot["acc_g"], slot["acc_d"]
                acc_g[...] = RHO_ADADELTA * acc_g + (1 - RHO_ADADELTA) * g * g
                delta = -np.sqrt(acc_d + EPS_ADADELTA) / np.sqrt(acc_g + EPS_ADADELTA) * g
                acc_d[...] = RHO_ADADELTA * acc_d + (1 - RHO_ADADELTA) * delta * delta
                p += lr * delta
            else:  # pragma: no cover
                raise ValueError(f"unhandled optimizer {rule}")
