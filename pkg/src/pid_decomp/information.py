"""Entropy, mutual information and conditional mutual information in bits.

All quantities are exact sums over finite (possibly truncated) tables.  When a
table is missing tail mass, ``truncation_bound`` carries the standard
continuity envelope ``t*log2(n) + h2(t)`` per entropy term involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .distributions import FinitePmf
from .errors import NumericalIntegrityError
from .systems import JointPmf

CLAMP_TOL = 1e-12

AxisGroup = Union[str, Sequence[str]]


@dataclass(frozen=True)
class InfoValue:
    value: float
    truncation_bound: float = 0.0

    def __float__(self) -> float:
        return self.value


def clamp_nonnegative(x: float, what: str = "quantity", tol: float = CLAMP_TOL) -> float:
    if x >= 0:
        return float(x)
    if x >= -tol:
        return 0.0
    raise NumericalIntegrityError(f"{what} is {x!r}, below zero by more than {tol}")


def _h2(t: float) -> float:
    if t <= 0 or t >= 1:
        return 0.0
    return -t * math.log2(t) - (1 - t) * math.log2(1 - t)


def entropy_envelope(tail: float, n: int) -> float:
    """Bound on the entropy error caused by ``tail`` omitted mass over ``n`` points."""
    if tail <= 0:
        return 0.0
    return tail * math.log2(max(n, 2)) + _h2(tail)


def entropy_array(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float).reshape(-1)
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


def mi_array(p: np.ndarray) -> float:
    """I(A;B) for a 2-d table p[a, b] (sub-normalized tables allowed)."""
    pa = p.sum(axis=1, keepdims=True)
    pb = p.sum(axis=0, keepdims=True)
    nz = p > 0
    pa, pb = np.broadcast_to(pa, p.shape)[nz], np.broadcast_to(pb, p.shape)[nz]
    return float((p[nz] * (np.log2(p[nz]) - np.log2(pa) - np.log2(pb))).sum())


def cmi_array(p: np.ndarray) -> float:
    """I(A;B|C) for a 3-d table p[a, b, c]; empty conditioning cells contribute nothing."""
    pc = p.sum(axis=(0, 1), keepdims=True)
    pac = p.sum(axis=1, keepdims=True)
    pbc = p.sum(axis=0, keepdims=True)
    nz = p > 0
    # Logs of each factor separately: products of tiny marginals underflow.
    logs = [np.log2(np.broadcast_to(t, p.shape)[nz]) for t in (p, pc, pac, pbc)]
    return float((p[nz] * (logs[0] + logs[1] - logs[2] - logs[3])).sum())


def _group(g: AxisGroup) -> tuple[str, ...]:
    return (g,) if isinstance(g, str) else tuple(g)


def _grouped_table(joint: JointPmf, groups: Sequence[tuple[str, ...]]) -> np.ndarray:
    """Marginal over the union of groups, reshaped to one axis per group."""
    names = [a for g in groups for a in g]
    sub = joint.marginal(names).table
    shape, pos = [], 0
    for g in groups:
        shape.append(int(np.prod(sub.shape[pos:pos + len(g)])))
        pos += len(g)
    return sub.reshape(shape)


def entropy(pmf: FinitePmf) -> InfoValue:
    return InfoValue(entropy_array(pmf.probs), entropy_envelope(pmf.tail_mass, len(pmf)))


def mutual_information(joint: JointPmf, axes: tuple[AxisGroup, AxisGroup] = ("M", "Y")) -> InfoValue:
    a, b = (_group(g) for g in axes)
    table = _grouped_table(joint, [a, b])
    value = clamp_nonnegative(mi_array(table), f"I({','.join(a)};{','.join(b)})")
    return InfoValue(value, 3 * entropy_envelope(joint.tail_mass, table.size))


def conditional_mutual_information(
    joint: JointPmf, a: AxisGroup = "M", b: AxisGroup = "Z", given: AxisGroup = "Y"
) -> InfoValue:
    """I(a; b | given), e.g. the default I(M;Z|Y)."""
    ga, gb, gc = _group(a), _group(b), _group(given)
    table = _grouped_table(joint, [ga, gb, gc])
    label = f"I({','.join(ga)};{','.join(gb)}|{','.join(gc)})"
    value = clamp_nonnegative(cmi_array(table), label)
    return InfoValue(value, 4 * entropy_envelope(joint.tail_mass, table.size))


def ci_joint_mutual_information(pm: np.ndarray, y_matrix: np.ndarray, z_matrix: np.ndarray, chunk: int = 256) -> float:
    """I(M;Y,Z) in bits for p(m, y, z) = pm[m] * y_matrix[m, y] * z_matrix[m, z].

    Equal to the dense-table value, but built one block of y values at a time.
    """
    p_m = pm * y_matrix.sum(axis=1) * z_matrix.sum(axis=1)
    log_pm = np.log2(np.where(p_m > 0, p_m, 1.0))
    total = 0.0
    for start in range(0, y_matrix.shape[1], chunk):
        p = pm[:, None, None] * y_matrix[:, start:start + chunk, None] * z_matrix[:, None, :]
        pyz = p.sum(axis=0, keepdims=True)
        nz = p > 0
        logs = np.log2(p[nz]) - np.broadcast_to(log_pm[:, None, None], p.shape)[nz]
        logs -= np.log2(np.broadcast_to(pyz, p.shape)[nz])
        total += float((p[nz] * logs).sum())
    return total
