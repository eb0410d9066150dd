"""Four-term BROJA decomposition of I(M;Y,Z) once one unique information is known.

With UI(M;Z\\Y) = 0 the identities
    I(M;Y,Z) = UI_Y + UI_Z + RI + SI,  I(M;Y) = UI_Y + RI,  I(M;Z) = UI_Z + RI
close to RI = I(M;Z), UI_Y = I(M;Y) - I(M;Z), SI = I(M;Y,Z) - I(M;Y), and
symmetrically when UI(M;Y\\Z) = 0.  Only SI depends on how Y and Z are
coupled given M; every result records that coupling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from .conditions import Direction, check
from .errors import ConditionsInconclusiveError, InvalidArgumentError, NumericalIntegrityError
from .information import (
    InfoValue,
    ci_joint_mutual_information,
    clamp_nonnegative,
    entropy_envelope,
    mi_array,
    mutual_information,
)
from .oracle import OracleProblem, OracleSolution
from .systems import JointPmf, SystemSpec, conditional_table

Provenance = Literal["closed_form", "oracle"]
JointAssumption = Literal["conditional_independence", "user_supplied"]

IDENTITY_TOL = 1e-9


@dataclass(frozen=True)
class PidResult:
    ui_y: InfoValue
    ui_z: InfoValue
    ri: InfoValue
    si: InfoValue
    i_my: InfoValue
    i_mz: InfoValue
    i_myz: InfoValue
    direction: Optional[Direction]
    provenance: Provenance
    joint_assumption: JointAssumption

    def identity_residuals(self) -> dict[str, float]:
        """Absolute residuals of the three defining identities."""
        ui_y, ui_z, ri, si = (self.ui_y.value, self.ui_z.value, self.ri.value, self.si.value)
        return {
            "total": abs(ui_y + ui_z + ri + si - self.i_myz.value),
            "y": abs(ui_y + ri - self.i_my.value),
            "z": abs(ui_z + ri - self.i_mz.value),
        }

    def identities_hold(self, tol: float = IDENTITY_TOL) -> bool:
        return max(self.identity_residuals().values()) <= tol


def _term(x: float, what: str) -> float:
    return clamp_nonnegative(x, what, IDENTITY_TOL)


def assemble_pid(
    i_my: InfoValue,
    i_mz: InfoValue,
    i_myz: InfoValue,
    *,
    ui_y: float | None = None,
    ui_z: float | None = None,
    direction: Optional[Direction] = None,
    provenance: Provenance = "closed_form",
    joint_assumption: JointAssumption = "conditional_independence",
    ui_bound: float = 0.0,
) -> PidResult:
    """Close the identities from one known unique information.

    Pass ``ui_z`` (or ``ui_y``); the other three terms follow.  Passing both
    zero asserts I(M;Y) = I(M;Z).  The identities are re-checked on the
    clamped terms; a failure raises NumericalIntegrityError.
    """
    a, b, c = i_my.value, i_mz.value, i_myz.value
    if ui_y is None and ui_z is None:
        raise InvalidArgumentError("one of ui_y, ui_z is required")
    if ui_y is not None and ui_z is not None:
        if ui_y != 0 or ui_z != 0:
            raise InvalidArgumentError("pass a single unique information unless both are zero")
        if abs(a - b) > IDENTITY_TOL:
            raise NumericalIntegrityError(f"both unique informations are zero but I(M;Y)={a!r} != I(M;Z)={b!r}")
        ri = a
        uy, uz = 0.0, 0.0
    elif ui_z is not None:
        if b - ui_z > a + IDENTITY_TOL:
            raise NumericalIntegrityError(f"data processing fails: I(M;Z)={b!r} exceeds I(M;Y)={a!r}")
        uz = ui_z
        ri = b - uz
        uy = a - ri
    else:
        if a - ui_y > b + IDENTITY_TOL:
            raise NumericalIntegrityError(f"data processing fails: I(M;Y)={a!r} exceeds I(M;Z)={b!r}")
        uy = ui_y
        ri = a - uy
        uz = b - ri
    si = c - uy - uz - ri

    bounds = (i_my.truncation_bound, i_mz.truncation_bound, i_myz.truncation_bound)
    result = PidResult(
        ui_y=InfoValue(_term(uy, "UI(M;Y\\Z)"), bounds[0] + bounds[1] + ui_bound),
        ui_z=InfoValue(_term(uz, "UI(M;Z\\Y)"), ui_bound),
        ri=InfoValue(_term(ri, "RI"), bounds[1] + ui_bound),
        si=InfoValue(_term(si, "SI"), sum(bounds) + ui_bound),
        i_my=i_my,
        i_mz=i_mz,
        i_myz=i_myz,
        direction=direction,
        provenance=provenance,
        joint_assumption=joint_assumption,
    )
    if not result.identities_hold():
        raise NumericalIntegrityError(f"PID identities violated: {result.identity_residuals()}")
    return result


def _ci_informations(pm, y_matrix, z_matrix, y_tail, z_tail) -> tuple[InfoValue, InfoValue, InfoValue]:
    """I(M;Y), I(M;Z), I(M;Y,Z) under P(m) P(y|m) P(z|m)."""
    ny, nz = y_matrix.shape[1], z_matrix.shape[1]
    n_m = len(pm)
    i_my = clamp_nonnegative(mi_array(pm[:, None] * y_matrix), "I(M;Y)")
    i_mz = clamp_nonnegative(mi_array(pm[:, None] * z_matrix), "I(M;Z)")
    i_myz = clamp_nonnegative(ci_joint_mutual_information(pm, y_matrix, z_matrix), "I(M;Y,Z)")
    return (
        InfoValue(i_my, 3 * entropy_envelope(y_tail, n_m * ny)),
        InfoValue(i_mz, 3 * entropy_envelope(z_tail, n_m * nz)),
        InfoValue(i_myz, 3 * entropy_envelope(y_tail + z_tail, n_m * ny * nz)),
    )


def _joint_informations(joint: JointPmf) -> tuple[InfoValue, InfoValue, InfoValue]:
    return (
        mutual_information(joint, ("M", "Y")),
        mutual_information(joint, ("M", "Z")),
        mutual_information(joint, ("M", ("Y", "Z"))),
    )


def closed_form_pid(spec: SystemSpec, epsilon: float = 1e-10, joint: JointPmf | None = None) -> PidResult:
    """PID from the sufficient conditions; SI uses ``joint`` or, by default, conditional independence."""
    report = check(spec)
    if report.direction == "neither":
        raise ConditionsInconclusiveError(
            "neither zero-UI condition holds; use the numerical oracle for this system"
        )
    if joint is None:
        y = conditional_table(spec, "Y", epsilon)
        z = conditional_table(spec, "Z", epsilon)
        infos = _ci_informations(spec.m_pmf.probs, y.matrix, z.matrix, float(y.tails.max()), float(z.tails.max()))
        assumption: JointAssumption = "conditional_independence"
    else:
        infos = _joint_informations(joint)
        assumption = "user_supplied"
    zeros = {
        "both": {"ui_y": 0.0, "ui_z": 0.0},
        "ui_z_zero": {"ui_z": 0.0},
        "ui_y_zero": {"ui_y": 0.0},
    }[report.direction]
    return assemble_pid(*infos, **zeros, direction=report.direction, provenance="closed_form", joint_assumption=assumption)


def oracle_pid(
    problem: OracleProblem,
    solution: OracleSolution,
    joint: JointPmf | None = None,
    direction: Optional[Direction] = None,
) -> PidResult:
    """PID assembled from the oracle's UI(M;Z\\Y) and the problem's marginals."""
    pm = problem.p_my.sum(axis=1)
    safe = np.where(pm > 0, pm, 1.0)[:, None]
    if joint is None:
        infos = _ci_informations(pm, problem.p_my / safe, problem.p_mz / safe, problem.tail_mass, problem.tail_mass)
        assumption: JointAssumption = "conditional_independence"
    else:
        infos = _joint_informations(joint)
        assumption = "user_supplied"
    return assemble_pid(
        *infos,
        ui_z=solution.ui_z.value,
        direction=direction,
        provenance="oracle",
        joint_assumption=assumption,
        ui_bound=solution.ui_z.truncation_bound,
    )

