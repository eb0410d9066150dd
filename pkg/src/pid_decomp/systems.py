"""Poisson and multinomial systems and their finite joint tables.

M always has a finite, user-supplied support.  Poisson conditionals are
truncated with explicit tail accounting; multinomial conditionals are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Mapping, Sequence, Union

import numpy as np

from .distributions import (
    PROB_SUM_TOL,
    FinitePmf,
    IndexTuple,
    MvPoissonParams,
    all_index_tuples,
    format_index_tuple,
    multinomial_distribution,
    truncated_support,
)
from .errors import InvalidArgumentError

Side = Literal["Y", "Z"]

# Dense (M, Y, Z) tables beyond this many cells are refused.
DENSE_CELL_CAP = 50_000_000


@dataclass(frozen=True, eq=False)
class ScalarMPmf:
    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        support = np.asarray(self.support, dtype=float).reshape(-1)
        probs = np.asarray(self.probs, dtype=float).reshape(-1)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)
        if len(support) == 0 or len(support) != len(probs):
            raise InvalidArgumentError("M support and probs must be non-empty and of equal length")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > PROB_SUM_TOL:
            raise InvalidArgumentError(f"M probabilities must be >= 0 and sum to 1, got sum {probs.sum()!r}")
        if len(np.unique(support)) != len(support):
            raise InvalidArgumentError("M support values must be distinct")
        if not np.all(np.isfinite(support)):
            raise InvalidArgumentError("M support values must be finite")

    def __len__(self) -> int:
        return len(self.support)


def _check_gamma(name: str, gamma: Mapping[IndexTuple, float], d: int, d_prime: int) -> dict[IndexTuple, float]:
    if not (1 <= d_prime <= d):
        raise InvalidArgumentError(f"{name}: need 1 <= d' <= d, got d={d}, d'={d_prime}")
    expected = all_index_tuples(d, d_prime)
    missing = [format_index_tuple(t) for t in expected if t not in gamma]
    extra = [format_index_tuple(t) for t in gamma if t not in set(expected)]
    if missing or extra:
        raise InvalidArgumentError(f"{name}: missing tuples {missing}, unexpected tuples {extra}")
    out = {}
    for t in expected:
        g = float(gamma[t])
        if not (g > 0 and math.isfinite(g)):
            raise InvalidArgumentError(f"{name}[{format_index_tuple(t)}] must be a positive finite SNR, got {g}")
        out[t] = g
    return out


@dataclass(frozen=True, eq=False)
class PoissonSystemSpec:
    """Y and Z are multivariate Poisson given M, with rate gamma_t * M**len(t)."""

    m_pmf: ScalarMPmf
    d1: int
    d1_prime: int
    d2: int
    d2_prime: int
    gamma_y: Mapping[IndexTuple, float]
    gamma_z: Mapping[IndexTuple, float]

    kind = "poisson"

    def __post_init__(self):
        object.__setattr__(self, "gamma_y", _check_gamma("gamma_y", self.gamma_y, self.d1, self.d1_prime))
        object.__setattr__(self, "gamma_z", _check_gamma("gamma_z", self.gamma_z, self.d2, self.d2_prime))
        if np.any(self.m_pmf.support <= 0):
            bad = self.m_pmf.support[self.m_pmf.support <= 0].tolist()
            raise InvalidArgumentError(
                f"Poisson system needs P(M <= 0) = 0; support contains {bad}"
            )

    def dims(self, side: Side) -> tuple[int, int]:
        return (self.d1, self.d1_prime) if side == "Y" else (self.d2, self.d2_prime)

    def gamma(self, side: Side) -> Mapping[IndexTuple, float]:
        return self.gamma_y if side == "Y" else self.gamma_z

    def params(self, side: Side, m: float) -> MvPoissonParams:
        """Rates lambda_t = gamma_t * m**len(t)."""
        _check_side(side)
        if m <= 0:
            raise InvalidArgumentError(f"m must be > 0 for the Poisson system, got {m}")
        d, dp = self.dims(side)
        return MvPoissonParams(d, dp, {t: g * m ** len(t) for t, g in self.gamma(side).items()})

    def swapped(self) -> "PoissonSystemSpec":
        return PoissonSystemSpec(self.m_pmf, self.d2, self.d2_prime, self.d1, self.d1_prime, self.gamma_z, self.gamma_y)


@dataclass(frozen=True, eq=False)
class MultinomialSystemSpec:
    """Y and Z are multinomial thinnings of an integer M."""

    m_pmf: ScalarMPmf
    p_y: np.ndarray
    p_z: np.ndarray

    kind = "multinomial"

    def __post_init__(self):
        s = self.m_pmf.support
        if np.any(s < 0) or np.any(s != np.round(s)):
            raise InvalidArgumentError(f"multinomial system needs M on nonnegative integers, got {s.tolist()}")
        for name in ("p_y", "p_z"):
            p = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if len(p) == 0 or np.any(p <= 0) or abs(p.sum() - 1.0) > PROB_SUM_TOL:
                raise InvalidArgumentError(f"{name} must be strictly positive and sum to 1, got {p.tolist()}")
            object.__setattr__(self, name, p)

    def p(self, side: Side) -> np.ndarray:
        _check_side(side)
        return self.p_y if side == "Y" else self.p_z

    def swapped(self) -> "MultinomialSystemSpec":
        return MultinomialSystemSpec(self.m_pmf, self.p_z, self.p_y)


SystemSpec = Union[PoissonSystemSpec, MultinomialSystemSpec]


def _check_side(side: str) -> None:
    if side not in ("Y", "Z"):
        raise InvalidArgumentError(f"side must be 'Y' or 'Z', got {side!r}")


@dataclass(frozen=True, eq=False)
class JointPmf:
    """Dense joint table; ``supports[k]`` lists the points of axis k, one per row."""

    axes: tuple[str, ...]
    supports: tuple[np.ndarray, ...]
    table: np.ndarray
    tail_mass: float = 0.0

    def __post_init__(self):
        supports = tuple(s[:, None] if s.ndim == 1 else s for s in map(np.asarray, self.supports))
        object.__setattr__(self, "supports", supports)
        table = np.asarray(self.table, dtype=float)
        object.__setattr__(self, "table", table)
        if len(self.axes) != table.ndim or len(supports) != table.ndim:
            raise InvalidArgumentError("axes, supports and table rank disagree")
        if tuple(len(s) for s in supports) != table.shape:
            raise InvalidArgumentError(f"table shape {table.shape} does not match supports")
        if np.any(table < 0):
            raise InvalidArgumentError("negative joint probability")
        total = float(table.sum()) + self.tail_mass
        if abs(total - 1.0) > PROB_SUM_TOL or self.tail_mass < 0:
            raise InvalidArgumentError(f"joint table plus tail sums to {total!r}, not 1")

    def axis(self, name: str) -> int:
        try:
            return self.axes.index(name)
        except ValueError:
            raise InvalidArgumentError(f"no axis {name!r} in {self.axes}") from None

    def marginal(self, keep: Sequence[str]) -> "JointPmf":
        idx = [self.axis(a) for a in keep]
        drop = tuple(i for i in range(len(self.axes)) if i not in idx)
        table = self.table.sum(axis=drop)
        # sum() keeps remaining axes in original order; reorder to ``keep``
        remaining = [i for i in range(len(self.axes)) if i not in drop]
        table = np.moveaxis(table, [remaining.index(i) for i in idx], list(range(len(idx))))
        return JointPmf(tuple(keep), tuple(self.supports[i] for i in idx), table, self.tail_mass)

    def to_pmf(self, axis: str) -> FinitePmf:
        m = self.marginal([axis])
        return FinitePmf(m.supports[0], m.table, m.tail_mass)


@dataclass(frozen=True, eq=False)
class ConditionalTable:
    """P(side | M) for every m, on a shared support (one row per m)."""

    support: np.ndarray
    matrix: np.ndarray
    tails: np.ndarray


def poisson_conditional(spec: PoissonSystemSpec, side: Side, m: float, epsilon: float) -> FinitePmf:
    return truncated_support(spec.params(side, m), epsilon, prune=True)


def multinomial_conditional(spec: MultinomialSystemSpec, side: Side, m: int) -> FinitePmf:
    if m < 0 or m != int(m):
        raise InvalidArgumentError(f"m must be a nonnegative integer, got {m}")
    return multinomial_distribution(int(m), spec.p(side))


def conditional(spec: SystemSpec, side: Side, m: float, epsilon: float) -> FinitePmf:
    if isinstance(spec, PoissonSystemSpec):
        return poisson_conditional(spec, side, m, epsilon)
    return multinomial_conditional(spec, side, int(m))


def _union_rows(pmfs: Sequence[FinitePmf]) -> tuple[np.ndarray, list[np.ndarray]]:
    """Lexicographically sorted union of supports and each pmf's row positions in it."""
    stacked = np.vstack([p.support for p in pmfs])
    union, inverse = np.unique(stacked, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    positions, start = [], 0
    for p in pmfs:
        positions.append(inverse[start:start + len(p)])
        start += len(p)
    return union, positions


def conditional_table(spec: SystemSpec, side: Side, epsilon: float) -> ConditionalTable:
    _check_side(side)
    pmfs = [conditional(spec, side, m, epsilon) for m in spec.m_pmf.support]
    union, positions = _union_rows(pmfs)
    matrix = np.zeros((len(pmfs), len(union)))
    for r, (pmf, pos) in enumerate(zip(pmfs, positions)):
        matrix[r, pos] = pmf.probs
    tails = np.array([p.tail_mass for p in pmfs])
    return ConditionalTable(union, matrix, tails)


def _m_support(spec: SystemSpec) -> np.ndarray:
    s = spec.m_pmf.support
    if isinstance(spec, MultinomialSystemSpec):
        return s.astype(np.int64)[:, None]
    return s[:, None]


def pairwise_joint(spec: SystemSpec, side: Side, epsilon: float = 1e-10) -> JointPmf:
    ct = conditional_table(spec, side, epsilon)
    pm = spec.m_pmf.probs
    table = pm[:, None] * ct.matrix
    tail = max(0.0, 1.0 - float(table.sum()))
    return JointPmf(("M", side), (_m_support(spec), ct.support), table, tail)


def joint_from_conditionals(pm: np.ndarray, m_support: np.ndarray, y: ConditionalTable, z: ConditionalTable) -> JointPmf:
    cells = len(pm) * y.matrix.shape[1] * z.matrix.shape[1]
    if cells > DENSE_CELL_CAP:
        raise InvalidArgumentError(f"dense (M,Y,Z) table would have {cells} cells (cap {DENSE_CELL_CAP})")
    table = pm[:, None, None] * y.matrix[:, :, None] * z.matrix[:, None, :]
    tail = max(0.0, 1.0 - float(table.sum()))
    return JointPmf(("M", "Y", "Z"), (m_support, y.support, z.support), table, tail)


def full_joint_conditionally_independent(spec: SystemSpec, epsilon: float = 1e-10) -> JointPmf:
    """P(m) P(y|m) P(z|m): the default coupling, which only affects synergy."""
    y = conditional_table(spec, "Y", epsilon)
    z = conditional_table(spec, "Z", epsilon)
    return joint_from_conditionals(spec.m_pmf.probs, _m_support(spec), y, z)
