"""Index tuples, the A-matrix, and exact pmfs for Poisson and multinomial laws.

Multivariate Poisson vectors are built from independent "generator" Poisson
variables, one per index tuple of length 1..d'.  Tuples, A-matrix columns and
generator vectors all share one canonical order: grouped by tuple length, then
lexicographic within a group.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Mapping, Sequence

import numpy as np
from scipy import stats
from scipy.special import gammaln, logsumexp

from .errors import InvalidArgumentError

IndexTuple = tuple[int, ...]

PROB_SUM_TOL = 1e-12


def enum_index_tuples(d: int, j: int) -> list[IndexTuple]:
    """All strictly increasing ``j``-tuples over ``1..d`` in lexicographic order."""
    if d < 1 or j < 1 or j > d:
        raise InvalidArgumentError(f"need 1 <= j <= d, got d={d}, j={j}")
    return list(itertools.combinations(range(1, d + 1), j))


def all_index_tuples(d: int, d_prime: int) -> list[IndexTuple]:
    """Canonical column order: tuples of length 1..d_prime, lexicographic per length."""
    if d_prime < 1 or d_prime > d:
        raise InvalidArgumentError(f"need 1 <= d_prime <= d, got d={d}, d_prime={d_prime}")
    return [t for j in range(1, d_prime + 1) for t in enum_index_tuples(d, j)]


def format_index_tuple(t: IndexTuple) -> str:
    return ",".join(str(i) for i in t)


def parse_index_tuple(text: str) -> IndexTuple:
    try:
        t = tuple(int(part) for part in text.split(","))
    except ValueError as exc:
        raise InvalidArgumentError(f"bad index tuple {text!r}") from exc
    if any(i < 1 for i in t) or any(a >= b for a, b in zip(t, t[1:])):
        raise InvalidArgumentError(f"index tuple {text!r} must be strictly increasing positive integers")
    return t


@dataclass(frozen=True)
class AMatrix:
    d: int
    d_prime: int
    entries: np.ndarray
    column_index: tuple[IndexTuple, ...]

    @property
    def orders(self) -> np.ndarray:
        """Tuple length of every column."""
        return np.array([len(t) for t in self.column_index])

    @property
    def n_generators(self) -> int:
        return len(self.column_index)


@lru_cache(maxsize=None)
def build_a_matrix(d: int, d_prime: int) -> AMatrix:
    cols = all_index_tuples(d, d_prime)
    entries = np.zeros((d, len(cols)), dtype=np.int64)
    for c, t in enumerate(cols):
        for i in t:
            entries[i - 1, c] = 1
    entries.setflags(write=False)
    return AMatrix(d=d, d_prime=d_prime, entries=entries, column_index=tuple(cols))


@dataclass(frozen=True)
class MvPoissonParams:
    """Rates of a Poisson(d, d', Lambda) vector, keyed by index tuple."""

    d: int
    d_prime: int
    lambdas: Mapping[IndexTuple, float]

    def __post_init__(self):
        expected = all_index_tuples(self.d, self.d_prime)
        keys = set(self.lambdas)
        if keys != set(expected):
            missing = [format_index_tuple(t) for t in expected if t not in keys]
            extra = [format_index_tuple(t) for t in keys if t not in set(expected)]
            raise InvalidArgumentError(f"rate map mismatch: missing {missing}, unexpected {extra}")
        for t, lam in self.lambdas.items():
            if not (lam >= 0 and math.isfinite(lam)):
                raise InvalidArgumentError(f"rate for {format_index_tuple(t)} must be finite and >= 0, got {lam}")

    @classmethod
    def from_rates(cls, d: int, d_prime: int, rates: Sequence[float]) -> "MvPoissonParams":
        cols = all_index_tuples(d, d_prime)
        if len(rates) != len(cols):
            raise InvalidArgumentError(f"expected {len(cols)} rates, got {len(rates)}")
        return cls(d, d_prime, {t: float(r) for t, r in zip(cols, rates)})

    @cached_property
    def a_matrix(self) -> AMatrix:
        return build_a_matrix(self.d, self.d_prime)

    @cached_property
    def rates(self) -> np.ndarray:
        """Rates in canonical generator order."""
        return np.array([self.lambdas[t] for t in self.a_matrix.column_index], dtype=float)


@dataclass(frozen=True, eq=False)
class FinitePmf:
    """Probabilities over distinct integer vectors plus the mass left out by truncation."""

    support: np.ndarray
    probs: np.ndarray
    tail_mass: float = 0.0

    def __post_init__(self):
        support = np.asarray(self.support)
        if support.ndim == 1:
            support = support[:, None]
        probs = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)
        if support.shape[0] != probs.shape[0]:
            raise InvalidArgumentError("support and probs lengths differ")
        if np.any(probs < 0):
            raise InvalidArgumentError("negative probability")
        if self.tail_mass < 0:
            raise InvalidArgumentError("negative tail mass")
        total = float(probs.sum()) + self.tail_mass
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise InvalidArgumentError(f"probabilities plus tail sum to {total!r}, not 1")
        if len(np.unique(support, axis=0)) != len(support):
            raise InvalidArgumentError("support points are not distinct")

    def __len__(self) -> int:
        return len(self.probs)

    @property
    def mass(self) -> float:
        return float(self.probs.sum())

    def as_dict(self) -> dict[tuple, float]:
        return {tuple(x.tolist()): float(p) for x, p in zip(self.support, self.probs)}

    def prob(self, point: Sequence) -> float:
        return self.as_dict().get(tuple(np.asarray(point).tolist()), 0.0)


def scalar_poisson_pmf(lam: float, k: int) -> float:
    if lam < 0 or k < 0:
        raise InvalidArgumentError(f"need lambda >= 0 and k >= 0, got {lam}, {k}")
    if lam == 0:
        return 1.0 if k == 0 else 0.0
    return math.exp(-lam + k * math.log(lam) - math.lgamma(k + 1))


def _log_poisson(lam: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Elementwise log pmf, with log(0) = -inf where lam == 0 < k."""
    lam = np.asarray(lam, dtype=float)
    k = np.asarray(k)
    with np.errstate(divide="ignore", invalid="ignore"):
        klog = np.where(k == 0, 0.0, k * np.log(lam))
    return -lam + klog - gammaln(k + 1)


def _check_prob_vector(p: Sequence[float]) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or len(p) == 0:
        raise InvalidArgumentError("probability vector must be a non-empty 1-d sequence")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise InvalidArgumentError(f"probability vector has a negative or non-finite entry: {p.tolist()}")
    if abs(p.sum() - 1.0) > PROB_SUM_TOL:
        raise InvalidArgumentError(f"probability vector sums to {p.sum()!r}, not 1")
    return p


def multinomial_pmf(n: int, p: Sequence[float], k: Sequence[int]) -> float:
    p = _check_prob_vector(p)
    k = np.asarray(k)
    if k.shape != p.shape:
        raise InvalidArgumentError("count vector and probability vector differ in length")
    if np.any(k < 0):
        raise InvalidArgumentError("negative count")
    if n < 0:
        raise InvalidArgumentError("negative number of trials")
    if k.sum() != n:
        return 0.0
    if np.any((p == 0) & (k > 0)):
        return 0.0
    nz = k > 0
    logp = gammaln(n + 1) - gammaln(k + 1).sum() + float(np.sum(k[nz] * np.log(p[nz])))
    return float(np.exp(logp))


@lru_cache(maxsize=None)
def _compositions(n: int, parts: int) -> np.ndarray:
    if parts == 1:
        out = np.array([[n]], dtype=np.int64)
    else:
        blocks = []
        for first in range(n, -1, -1):
            rest = _compositions(n - first, parts - 1)
            blocks.append(np.column_stack([np.full(len(rest), first), rest]))
        out = np.vstack(blocks)
    out.setflags(write=False)
    return out


def compositions(n: int, parts: int) -> np.ndarray:
    """All nonnegative integer vectors of length ``parts`` summing to ``n``.

    Ordered with the first coordinate descending, which is lexicographic
    descending; callers that need a canonical order sort themselves.
    """
    if n < 0 or parts < 1:
        raise InvalidArgumentError(f"need n >= 0 and parts >= 1, got {n}, {parts}")
    return _compositions(n, parts)


def multinomial_distribution(n: int, p: Sequence[float]) -> FinitePmf:
    """The full Multinomial(n, p) law as an exact FinitePmf."""
    p = _check_prob_vector(p)
    support = compositions(n, len(p))
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = np.log(p)
        terms = np.where(support > 0, support * logp, 0.0)
    logs = gammaln(n + 1) - gammaln(support + 1).sum(axis=1) + terms.sum(axis=1)
    probs = np.exp(logs)
    probs /= probs.sum()  # rounding only; the law is exact
    keep = probs > 0
    return FinitePmf(support[keep], probs[keep], 0.0)


# -- multivariate Poisson ---------------------------------------------------


def _check_point(params: MvPoissonParams, k: Sequence[int]) -> np.ndarray:
    k = np.asarray(k)
    if k.shape != (params.d,):
        raise InvalidArgumentError(f"point must have length {params.d}, got shape {k.shape}")
    if not np.issubdtype(k.dtype, np.integer):
        if not np.all(np.equal(np.mod(k, 1), 0)):
            raise InvalidArgumentError("point must contain integers")
        k = k.astype(np.int64)
    return k.astype(np.int64)


@lru_cache(maxsize=200_000)
def _higher_order_set(d: int, d_prime: int, k: tuple[int, ...]) -> np.ndarray:
    """Rows k' of higher-order generator counts with A' k' <= k componentwise.

    Built by expanding one higher-order column at a time, bounding each new
    coordinate by the remaining capacity of the rows it covers.
    """
    a = build_a_matrix(d, d_prime)
    higher = a.entries[:, d:]
    rows = np.zeros((1, 0), dtype=np.int64)
    remaining = np.array([k], dtype=np.int64)
    for c in range(higher.shape[1]):
        col = higher[:, c].astype(bool)
        ub = remaining[:, col].min(axis=1) if remaining.size else np.zeros(0, dtype=np.int64)
        reps = ub + 1
        rows = np.repeat(rows, reps, axis=0)
        remaining = np.repeat(remaining, reps, axis=0)
        offsets = np.concatenate([np.arange(r) for r in reps]) if len(reps) else np.zeros(0, dtype=np.int64)
        rows = np.column_stack([rows, offsets])
        remaining = remaining - np.outer(offsets, higher[:, c])
    rows.setflags(write=False)
    return rows


def mv_poisson_pmf(params: MvPoissonParams, k: Sequence[int]) -> float:
    """Closed-form pmf of Poisson(d, d', Lambda) written in terms of rate ratios.

    Falls back to generator enumeration when a main-effect rate is zero, since
    the ratio form divides by those rates.
    """
    k = _check_point(params, k)
    if np.any(k < 0):
        return 0.0
    rates = params.rates
    d = params.d
    base = rates[:d]
    if np.any(base == 0):
        return mv_poisson_pmf_bruteforce(params, k)
    kprime = _higher_order_set(d, params.d_prime, tuple(int(x) for x in k))
    a = params.a_matrix
    higher = a.entries[:, d:]
    log_base = np.log(base)
    higher_rates = rates[d:]
    # log of lambda_t / prod_{i in t} lambda_i
    with np.errstate(divide="ignore"):
        log_ratio = np.log(higher_rates) - higher.T @ log_base
    k1 = k[None, :] - kprime @ higher.T
    with np.errstate(invalid="ignore"):
        ratio_terms = np.where(kprime > 0, kprime * log_ratio, 0.0).sum(axis=1)
    log_terms = ratio_terms - gammaln(k1 + 1).sum(axis=1) - gammaln(kprime + 1).sum(axis=1)
    log_total = -rates.sum() + float(np.dot(k, log_base)) + logsumexp(log_terms)
    return float(np.exp(log_total))


@lru_cache(maxsize=200_000)
def _generator_set(d: int, d_prime: int, k: tuple[int, ...]) -> tuple[tuple[int, ...], ...]:
    """S_k: every generator vector g >= 0 with A g = k, by plain recursion."""
    cols = all_index_tuples(d, d_prime)
    higher = [t for t in cols if len(t) > 1]
    found: list[tuple[int, ...]] = []

    def recurse(pos: int, remaining: list[int], chosen: list[int]) -> None:
        if pos == len(higher):
            # main effects absorb whatever is left; remaining >= 0 by construction
            found.append(tuple(remaining) + tuple(chosen))
            return
        t = higher[pos]
        for v in range(min(remaining[i - 1] for i in t) + 1):
            nxt = list(remaining)
            for i in t:
                nxt[i - 1] -= v
            recurse(pos + 1, nxt, chosen + [v])

    if all(x >= 0 for x in k):
        recurse(0, list(k), [])
    return tuple(found)


def generator_set(params_or_a: MvPoissonParams | AMatrix, k: Sequence[int]) -> np.ndarray:
    """S_k as an array with one generator vector per row (canonical column order)."""
    a = params_or_a.a_matrix if isinstance(params_or_a, MvPoissonParams) else params_or_a
    found = _generator_set(a.d, a.d_prime, tuple(int(x) for x in k))
    if not found:
        return np.zeros((0, a.n_generators), dtype=np.int64)
    return np.array(found, dtype=np.int64)


def mv_poisson_pmf_bruteforce(params: MvPoissonParams, k: Sequence[int]) -> float:
    """Sum over S_k of products of independent scalar Poisson pmfs."""
    k = _check_point(params, k)
    if np.any(k < 0):
        return 0.0
    gens = generator_set(params, k)
    if len(gens) == 0:
        return 0.0
    return float(stats.poisson.pmf(gens, params.rates[None, :]).prod(axis=1).sum())


def _poisson_cap(lam: float, tail: float) -> int:
    """Smallest c with P(Poisson(lam) > c) <= tail."""
    if lam == 0:
        return 0
    c = int(stats.poisson.isf(tail, lam))
    while stats.poisson.sf(c, lam) > tail:
        c += 1
    while c > 0 and stats.poisson.sf(c - 1, lam) <= tail:
        c -= 1
    return c


def generator_caps(params: MvPoissonParams, epsilon: float) -> np.ndarray:
    """Per-generator caps splitting ``epsilon`` uniformly (union bound)."""
    share = epsilon / params.a_matrix.n_generators
    return np.array([_poisson_cap(lam, share) for lam in params.rates], dtype=np.int64)


def _shift_add(out: np.ndarray, src: np.ndarray, shift: np.ndarray, weight: float) -> None:
    """out[x + shift] += weight * src[x], dropping anything outside ``out``."""
    dst = []
    srcs = []
    for s, n in zip(shift, out.shape):
        if s >= n:
            return
        dst.append(slice(s, n))
        srcs.append(slice(0, n - s))
    out[tuple(dst)] += weight * src[tuple(srcs)]


def _box_pmf(params: MvPoissonParams, kmax: np.ndarray) -> np.ndarray:
    """Exact pmf on the box [0, kmax] as a dense d-dimensional array.

    Each generator is convolved in along its A-column.  A generator can reach
    the box only with a value <= the smallest kmax among the rows it covers,
    so including exactly those values makes every box entry exact.
    """
    a = params.a_matrix
    shape = tuple(int(x) + 1 for x in kmax)
    table = np.zeros(shape)
    table[(0,) * params.d] = 1.0
    for c in range(a.n_generators):
        col = a.entries[:, c]
        reach = int(kmax[col.astype(bool)].min())
        lam = params.rates[c]
        if lam == 0:
            continue
        weights = np.exp(_log_poisson(np.full(reach + 1, lam), np.arange(reach + 1)))
        new = np.zeros(shape)
        for v in range(reach + 1):
            _shift_add(new, table, v * col, weights[v])
        table = new
    return table


def truncated_support(params: MvPoissonParams, epsilon: float, prune: bool = False) -> FinitePmf:
    """The pmf restricted to a box that holds at least ``1 - epsilon`` of the mass.

    The box edge for coordinate i is the sum of the per-generator caps of the
    generators covering i, so the box contains every outcome with all
    generators at or below their caps.  With ``prune=True`` the box uses half
    of ``epsilon``, and the smallest box entries are then dropped while the
    total omitted mass stays within ``epsilon``.  ``tail_mass`` is the omitted
    probability, computed as one minus the retained mass.
    """
    if not (0 < epsilon < 1):
        raise InvalidArgumentError(f"epsilon must lie in (0, 1), got {epsilon}")
    box_eps = epsilon / 2 if prune else epsilon
    caps = generator_caps(params, box_eps)
    kmax = params.a_matrix.entries @ caps
    table = _box_pmf(params, kmax)
    grid = np.indices(table.shape).reshape(params.d, -1).T
    probs = table.reshape(-1)
    keep = probs > 0
    grid, probs = grid[keep], probs[keep]
    if prune:
        retained = probs.sum()
        budget = epsilon - max(0.0, 1.0 - retained)
        order = np.argsort(probs, kind="stable")
        dropped = np.cumsum(probs[order])
        n_drop = int(np.searchsorted(dropped, budget, side="right"))
        mask = np.ones(len(probs), dtype=bool)
        mask[order[:n_drop]] = False
        grid, probs = grid[mask], probs[mask]
    tail = max(0.0, 1.0 - float(probs.sum()))
    return FinitePmf(grid, probs, tail)
