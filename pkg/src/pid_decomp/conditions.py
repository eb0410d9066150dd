"""Sufficient conditions for a zero unique-information term.

Poisson: Y dominates Z when d1' >= d2' and, for every order j <= d2', the
SNRs of Y's order-j generators sum to at least those of Z's.  Multinomial: Y
dominates Z when min(p_z) >= min(p_y).  Both checks are run in each
orientation.  The conditions are sufficient only, so failing both is reported
as inconclusive, not as positive unique information.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .systems import MultinomialSystemSpec, PoissonSystemSpec, SystemSpec

Direction = Literal["ui_z_zero", "ui_y_zero", "both", "neither"]


@dataclass(frozen=True)
class OrderCheck:
    j: int
    lhs_sum: float
    rhs_sum: float
    satisfied: bool


@dataclass(frozen=True)
class ConditionReport:
    system_kind: str
    direction: Direction
    # "Y dominates Z" (UI(M;Z\Y) = 0) and the swapped orientation.
    per_order: tuple[OrderCheck, ...] = ()
    per_order_swapped: tuple[OrderCheck, ...] = ()
    minima: tuple[float, float] | None = None  # (min p_z, min p_y)
    order_ok: bool = True
    order_ok_swapped: bool = True

    @property
    def status(self) -> str:
        return "inconclusive" if self.direction == "neither" else "zero_ui"

    @property
    def y_dominates(self) -> bool:
        return self.direction in ("ui_z_zero", "both")

    @property
    def z_dominates(self) -> bool:
        return self.direction in ("ui_y_zero", "both")

    def failing_orders(self) -> list[int]:
        return [c.j for c in self.per_order if not c.satisfied]


def _direction(forward: bool, backward: bool) -> Direction:
    if forward and backward:
        return "both"
    if forward:
        return "ui_z_zero"
    if backward:
        return "ui_y_zero"
    return "neither"


def order_sums(gamma, j: int) -> float:
    return float(sum(g for t, g in gamma.items() if len(t) == j))


def _poisson_orientation(gy, dy_prime, gz, dz_prime) -> tuple[bool, tuple[OrderCheck, ...]]:
    order_ok = dy_prime >= dz_prime
    checks = []
    for j in range(1, dz_prime + 1):
        lhs = order_sums(gy, j)
        rhs = order_sums(gz, j)
        checks.append(OrderCheck(j, lhs, rhs, lhs >= rhs))
    return order_ok, tuple(checks)


def check_poisson(spec: PoissonSystemSpec) -> ConditionReport:
    ok_f, fwd = _poisson_orientation(spec.gamma_y, spec.d1_prime, spec.gamma_z, spec.d2_prime)
    ok_b, bwd = _poisson_orientation(spec.gamma_z, spec.d2_prime, spec.gamma_y, spec.d1_prime)
    forward = ok_f and all(c.satisfied for c in fwd)
    backward = ok_b and all(c.satisfied for c in bwd)
    return ConditionReport(
        system_kind="poisson",
        direction=_direction(forward, backward),
        per_order=fwd,
        per_order_swapped=bwd,
        order_ok=ok_f,
        order_ok_swapped=ok_b,
    )


def check_multinomial(spec: MultinomialSystemSpec) -> ConditionReport:
    min_z = float(np.min(spec.p_z))
    min_y = float(np.min(spec.p_y))
    return ConditionReport(
        system_kind="multinomial",
        direction=_direction(min_z >= min_y, min_y >= min_z),
        minima=(min_z, min_y),
    )


def check(spec: SystemSpec) -> ConditionReport:
    if isinstance(spec, PoissonSystemSpec):
        return check_poisson(spec)
    return check_multinomial(spec)
