"""Finite-difference verification of analytic gradients.

Every differentiable operation shipped by this repo is expected to pass
``grad_check`` at tol 1e-4 with h = 1e-5 in double precision; the CLI's
``gradcheck`` command and the test suite both run through this harness.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from ..errors import NonFiniteError, ParameterError
from .rng import Rng
from .tensor import Tensor, tensor


@dataclass
class GradCheckReport:
    op_name: str
    max_rel_err: float
    per_parameter_errors: list[tuple[str, float]]
    passed: bool
    failures: list[str] = field(default_factory=list)

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.op_name}: max_rel_err={self.max_rel_err:.3e}"


def grad_check(
    f: Callable[[Mapping[str, Tensor]], Tensor],
    point: Mapping[str, np.ndarray],
    h: float = 1e-5,
    tol: float = 1e-4,
    op_name: str = "f",
    max_coords_per_tensor: int | None = None,
    rng: Rng | None = None,
) -> GradCheckReport:
    """Compare reverse-mode gradients of scalar ``f`` against central differences.

    ``point`` maps parameter names to double-precision arrays. The numeric
    estimate is (f(x+h) - f(x-h)) / 2h per coordinate; relative error uses a
    max(|analytic|, |numeric|, 1e-8) denominator. When
    ``max_coords_per_tensor`` is set, that many coordinates per tensor are
    probed (chosen by ``rng``), which keeps large parameter sets affordable.
    A non-finite value at any probe is reported as a failure, not raised.
    """
    if h <= 0:
        raise ParameterError("grad_check requires h > 0")
    names = sorted(point)
    base = {k: np.asarray(point[k], dtype=np.float64) for k in names}

    leaves = {k: tensor(base[k], name=k) for k in names}
    out = f(leaves)
    if out.size != 1:
        raise ParameterError("grad_check target must return a scalar")
    out.backward()
    analytic = {
        k: (leaves[k].grad if leaves[k].grad is not None else np.zeros_like(base[k])) for k in names
    }

    def evaluate(values: Mapping[str, np.ndarray]) -> float:
        return f({k: tensor(values[k], name=k) for k in names}).item()

    failures: list[str] = []
    per_param: list[tuple[str, float]] = []
    for k in names:
        flat = base[k].reshape(-1)
        n = flat.size
        if max_coords_per_tensor is not None and n > max_coords_per_tensor:
            if rng is None:
                raise ParameterError("coordinate sampling requires an Rng")
            coords = np.sort(rng.split("gradcheck", k).permutation(n)[:max_coords_per_tensor])
        else:
            coords = np.arange(n)
        worst = 0.0
        for c in coords:
            probe = {kk: base[kk] for kk in names}
            bumped = base[k].copy()
            bumped.reshape(-1)[c] += h
            probe[k] = bumped
            try:
                f_plus = evaluate(probe)
                bumped2 = base[k].copy()
                bumped2.reshape(-1)[c] -= h
                probe[k] = bumped2
                f_minus = evaluate(probe)
            except NonFiniteError as err:
                failures.append(f"{k}[{c}]: non-finite probe ({err})")
                continue
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                failures.append(f"{k}[{c}]: non-finite objective at probe")
                continue
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = float(analytic[k].reshape(-1)[c])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, rel)
        per_param.append((k, worst))

    max_rel = max((e for _, e in per_param), default=0.0)
    passed = (max_rel <= tol) and not failures
    return GradCheckReport(
        op_name=op_name,
        max_rel_err=max_rel,
        per_parameter_errors=per_param,
        passed=passed,
        failures=failures,
    )
