"""Central finite-difference verification of autodiff gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .tensor import Tensor, no_grad


class NumericError(ArithmeticError):
    """A loss or objective evaluated to a non-finite value."""


@dataclass
class GradcheckFailure:
    name: str
    index: tuple[int, ...]
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradcheckReport:
    epsilon: float
    tolerance: float
    n_checked: int = 0
    max_rel_error: float = 0.0
    worst: GradcheckFailure | None = None
    failures: list[GradcheckFailure] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        line = (f"{status}: {self.n_checked} entries, max relative error {self.max_rel_error:.3e} "
                f"(tolerance {self.tolerance:g}, epsilon {self.epsilon:g})")
        if self.worst is not None:
            w = self.worst
            line += f"; worst at {w.name}{list(w.index)} analytic={w.analytic:.6e} numeric={w.numeric:.6e}"
        return line


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def finite_difference_check(f: Callable[[], Tensor], params: Mapping[str, Tensor], epsilon: float = 1e-5,
                            tolerance: float = 1e-5, floor: float = 1e-6) -> GradcheckReport:
    """Compare autodiff gradients of scalar ``f()`` against central differences.

    Every entry of every tensor in ``params`` is perturbed by ``+-epsilon``.
    The relative error is ``|a - n| / max(|a|, |n|, floor)``; the floor keeps
    entries whose true gradient is zero from dividing round-off by zero.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    for p in params.values():
        p.zero_grad()
    loss = f()
    if not np.isfinite(loss.data).all():
        raise NumericError("objective is not finite at the unperturbed point")
    loss.backward()
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for name, p in params.items()}

    report = GradcheckReport(epsilon=epsilon, tolerance=tolerance)
    with no_grad():
        for name, p in params.items():
            flat = p.data.reshape(-1)
            for k in range(flat.size):
                original = flat[k]
                flat[k] = original + epsilon
                up = f().item()
                flat[k] = original - epsilon
                down = f().item()
                flat[k] = original
                index = np.unravel_index(k, p.shape)
                if not (np.isfinite(up) and np.isfinite(down)):
                    raise NumericError(f"objective is not finite when perturbing {name}{list(index)}")
                numeric = (up - down) / (2.0 * epsilon)
                a = float(analytic[name].reshape(-1)[k])
                err = relative_error(a, numeric, floor)
                report.n_checked += 1
                entry = GradcheckFailure(name, tuple(int(i) for i in index), a, numeric, err)
                if err > report.max_rel_error or report.worst is None:
                    report.max_rel_error = max(err, report.max_rel_error)
                    report.worst = entry
                if err >= tolerance:
                    report.failures.append(entry)
    return report
