"""Value-function certificates V with gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


@dataclass(frozen=True)
class ValueCertificate:
    """A candidate value function.

    ``is_quadratic`` declares that ``V`` is a polynomial of degree at most two
    along every affine direction in which the inputs enter the maps; the
    min-max routines then identify the input dependence exactly.
    """

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    n: int
    is_quadratic: bool = False
    P: Optional[np.ndarray] = None
    name: str = "V"
    meta: dict = field(default_factory=dict, compare=False)

    def __call__(self, x) -> float:
        return float(self.value(np.asarray(x, dtype=float)))

    def grad(self, x) -> np.ndarray:
        return np.asarray(self.gradient(np.asarray(x, dtype=float)), dtype=float).reshape(self.n)

    def scaled(self, c: float) -> "ValueCertificate":
        return ValueCertificate(
            lambda x: c * self.value(x),
            lambda x: c * np.asarray(self.gradient(x)),
            self.n,
            self.is_quadratic,
            None if self.P is None else c * self.P,
            f"{c}*{self.name}",
        )

    @classmethod
    def quadratic(cls, P, name: str = "xPx") -> "ValueCertificate":
        P = np.atleast_2d(np.asarray(P, dtype=float))
        P = 0.5 * (P + P.T)
        n = P.shape[0]
        return cls(lambda x: float(x @ P @ x), lambda x: 2.0 * P @ x, n, True, P, name)

    @classmethod
    def timer_quadratic(cls, P_at: Callable, dP_at: Callable, n_p: int, name: str = "xP(tau)x") -> "ValueCertificate":
        """``V(x_p, tau) = x_p' P(tau) x_p`` on the timer-augmented state."""

        def value(x):
            xp = x[:n_p]
            return float(xp @ P_at(x[n_p]) @ xp)

        def gradient(x):
            xp, tau = x[:n_p], x[n_p]
            return np.append(2.0 * P_at(tau) @ xp, xp @ dP_at(tau) @ xp)

        # Quadratic in x_p for fixed tau; the inputs never move tau.
        return cls(value, gradient, n_p + 1, True, None, name, {"P_at": P_at, "dP_at": dP_at})

    @classmethod
    def custom(cls, value, gradient, n: int, is_quadratic: bool = False, name: str = "V") -> "ValueCertificate":
        return cls(value, gradient, n, is_quadratic, None, name)


def gradient_check(V: ValueCertificate, points, rel_step: float = 1e-5) -> float:
    """Worst relative error between ``V.grad`` and central differences.

    The error at a point is ``|g - g_fd| / max(|g|, scale)`` with
    ``scale = max(1, |x|)`` guarding points where the gradient vanishes.
    """
    worst = 0.0
    for x in points:
        x = np.asarray(x, dtype=float)
        scale = max(1.0, float(np.linalg.norm(x)))
        h = rel_step * scale
        g = V.grad(x)
        fd = np.empty(V.n)
        for i in range(V.n):
            e = np.zeros(V.n)
            e[i] = h
            fd[i] = (V(x + e) - V(x - e)) / (2.0 * h)
        err = float(np.linalg.norm(g - fd)) / max(float(np.linalg.norm(g)), scale)
        worst = max(worst, err)
    return worst
