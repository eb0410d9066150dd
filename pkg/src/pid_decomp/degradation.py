"""Explicit Y -> Z degradation channels and numerical degradedness certificates.

Poisson system: Y is mapped to its generator vector through the posterior
P(Y^g | Y), which does not depend on M; each covariance order of Y^g is then
thinned multinomially onto Z's generators of the same order (plus a discard
class); finally Z = A_Z Z^g.  Multinomial system: the counts of Y outside its
least likely class are thinned onto Z's classes.

A certificate checks that channel o P(Y|m) reproduces P(Z|m) for every m and
that I(M;Z|Y) vanishes under P(m) P(y|m) C(z|y).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _parallel
from .conditions import check_multinomial, check_poisson, order_sums
from .distributions import (
    AMatrix,
    FinitePmf,
    MvPoissonParams,
    _check_prob_vector,
    _higher_order_set,
    _log_poisson,
    build_a_matrix,
    multinomial_distribution,
)
from .errors import ConstructionInfeasibleError, InternalError, InvalidArgumentError
from .information import clamp_nonnegative, cmi_array
from .systems import (
    MultinomialSystemSpec,
    PoissonSystemSpec,
    SystemSpec,
    conditional_table,
)

ROW_TOL = 1e-10


def _as_points(points) -> np.ndarray:
    arr = np.asarray(points)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


def _index_rows(support: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Row index in ``support`` of each point, or -1 if absent."""
    lookup = {tuple(row): i for i, row in enumerate(support.tolist())}
    return np.array([lookup.get(tuple(p), -1) for p in points.tolist()], dtype=np.int64)


@dataclass(frozen=True, eq=False)
class Channel:
    """Row-stochastic table: ``matrix[i, j] = C(output_support[j] | input_support[i])``."""

    input_support: np.ndarray
    output_support: np.ndarray
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "input_support", _as_points(self.input_support))
        object.__setattr__(self, "output_support", _as_points(self.output_support))
        matrix = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", matrix)
        if matrix.shape != (len(self.input_support), len(self.output_support)):
            raise InvalidArgumentError(f"channel matrix shape {matrix.shape} does not match supports")
        if np.any(matrix < 0):
            raise InvalidArgumentError("channel has a negative entry")
        sums = matrix.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_TOL)
        if len(bad):
            i = int(bad[0])
            raise InvalidArgumentError(
                f"channel row for input {self.input_support[i].tolist()} sums to {sums[i]!r}"
            )

    def row(self, point: Sequence[int]) -> FinitePmf:
        i = _index_rows(self.input_support, np.asarray([point]).reshape(1, -1))[0]
        if i < 0:
            raise InvalidArgumentError(f"{list(point)} is not an input of this channel")
        nz = self.matrix[i] > 0
        probs = self.matrix[i, nz]
        return FinitePmf(self.output_support[nz], probs / probs.sum())

    def compose(self, after: "Channel") -> "Channel":
        """The channel ``self`` followed by ``after``."""
        idx = _index_rows(after.input_support, self.output_support)
        used = self.matrix[:, idx < 0].sum(axis=1)
        if np.any(used > 0):
            raise InvalidArgumentError("outputs of the first channel are not inputs of the second")
        matrix = self.matrix[:, idx >= 0] @ after.matrix[idx[idx >= 0]]
        return Channel(self.input_support, after.output_support, matrix)

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["input", "output", "probability"])
        for i, x in enumerate(self.input_support):
            for j in np.flatnonzero(self.matrix[i]):
                writer.writerow([
                    " ".join(str(v) for v in x.tolist()),
                    " ".join(str(v) for v in self.output_support[j].tolist()),
                    format(float(self.matrix[i, j]), ".17g"),
                ])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source: str | Path) -> "Channel":
        text = Path(source).read_text() if not str(source).lstrip().startswith("input") else str(source)
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames != ["input", "output", "probability"]:
            raise InvalidArgumentError(f"channel CSV header must be input,output,probability; got {reader.fieldnames}")
        entries = []
        for lineno, rec in enumerate(reader, start=2):
            try:
                x = tuple(int(v) for v in rec["input"].split())
                z = tuple(int(v) for v in rec["output"].split())
                p = float(rec["probability"])
            except (TypeError, ValueError) as exc:
                raise InvalidArgumentError(f"channel CSV line {lineno}: {exc}") from None
            entries.append((x, z, p))
        if not entries:
            raise InvalidArgumentError("channel CSV has no rows")
        ins = sorted({e[0] for e in entries})
        outs = sorted({e[1] for e in entries})
        iin = {x: i for i, x in enumerate(ins)}
        iout = {z: j for j, z in enumerate(outs)}
        matrix = np.zeros((len(ins), len(outs)))
        for x, z, p in entries:
            matrix[iin[x], iout[z]] += p
        return cls(np.array(ins), np.array(outs), matrix)


# -- Poisson construction ----------------------------------------------------


def generator_posterior(params: MvPoissonParams, y: Sequence[int]) -> FinitePmf:
    """P(Y^g = g | Y = y) over the finite set {g >= 0 : A g = y}.

    With rates gamma_t * m**len(t) the result is the same for every m > 0.
    """
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (params.d,) or np.any(y < 0):
        raise InvalidArgumentError(f"y must be a nonnegative vector of length {params.d}")
    return FinitePmf(*_posterior_arrays(params, y))


def _posterior_arrays(params: MvPoissonParams, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gens = _generator_vectors(params.a_matrix, y)
    logw = _log_poisson(params.rates[None, :], gens).sum(axis=1)
    if len(gens) == 0 or not np.any(np.isfinite(logw)):
        raise InternalError(f"no generator vector with positive probability maps to y={y.tolist()}")
    probs = np.exp(logw - logw.max())
    keep = probs > 0
    return gens[keep], probs[keep] / probs[keep].sum()


def _generator_vectors(a: AMatrix, y: np.ndarray) -> np.ndarray:
    kprime = _higher_order_set(a.d, a.d_prime, tuple(int(v) for v in y))
    k1 = y[None, :] - kprime @ a.entries[:, a.d:].T
    return np.column_stack([k1, kprime]).astype(np.int64)


@dataclass(frozen=True, eq=False)
class GeneratorThinning:
    """Channel Y^g -> Z^g: an independent multinomial thinning per covariance order.

    Order j of Y^g holds N_j total counts; they are split over Z's order-j
    generators with probabilities gamma^Z_t / (sum of Y's order-j SNRs), the
    remainder going to a discard class.  Orders above d2' are discarded.
    """

    y_matrix: AMatrix
    z_matrix: AMatrix
    order_probs: tuple[np.ndarray, ...]  # order j -> probabilities of Z's order-j generators

    def order_totals(self, y_g: np.ndarray) -> np.ndarray:
        y_g = np.atleast_2d(y_g)
        orders = self.y_matrix.orders
        return np.column_stack([y_g[:, orders == j].sum(axis=1) for j in range(1, len(self.order_probs) + 1)])

    def row_from_totals(self, totals: Sequence[int]) -> FinitePmf:
        parts_support, parts_probs = [], []
        for n_j, q in zip(totals, self.order_probs):
            discard = max(0.0, 1.0 - float(q.sum()))
            full = np.append(q, discard)
            full = full / full.sum()
            law = multinomial_distribution(int(n_j), full)
            parts_support.append(law.support[:, :-1])
            parts_probs.append(law.probs)
        support, probs = parts_support[0], parts_probs[0]
        for s2, p2 in zip(parts_support[1:], parts_probs[1:]):
            support = np.column_stack([np.repeat(support, len(s2), axis=0), np.tile(s2, (len(support), 1))])
            probs = np.outer(probs, p2).reshape(-1)
        return FinitePmf(support, probs)

    def row(self, y_g: Sequence[int]) -> FinitePmf:
        return self.row_from_totals(self.order_totals(np.asarray(y_g))[0])

    def to_channel(self, inputs: np.ndarray) -> Channel:
        rows = [self.row(x) for x in np.atleast_2d(inputs)]
        return _stack_rows(np.atleast_2d(inputs), rows)


def _stack_rows(inputs: np.ndarray, rows: Sequence[FinitePmf]) -> Channel:
    stacked = np.vstack([r.support for r in rows])
    outs, inverse = np.unique(stacked, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    matrix = np.zeros((len(rows), len(outs)))
    start = 0
    for i, r in enumerate(rows):
        np.add.at(matrix[i], inverse[start:start + len(r)], r.probs)
        start += len(r)
    return Channel(inputs, outs, matrix)


def generator_thinning(spec: PoissonSystemSpec) -> GeneratorThinning:
    if spec.d1_prime < spec.d2_prime:
        raise ConstructionInfeasibleError(
            f"Y's covariance order d1'={spec.d1_prime} is below Z's d2'={spec.d2_prime}"
        )
    probs = []
    for j in range(1, spec.d2_prime + 1):
        total_y = order_sums(spec.gamma_y, j)
        z_tuples = [t for t in build_a_matrix(spec.d2, spec.d2_prime).column_index if len(t) == j]
        q = np.array([spec.gamma_z[t] for t in z_tuples]) / total_y
        if q.sum() > 1.0 + 1e-12:
            raise ConstructionInfeasibleError(
                f"order {j}: Z's SNR sum {order_sums(spec.gamma_z, j)!r} exceeds Y's {total_y!r}"
            )
        if q.sum() > 1.0:
            q = q / q.sum()
        probs.append(q)
    return GeneratorThinning(
        build_a_matrix(spec.d1, spec.d1_prime), build_a_matrix(spec.d2, spec.d2_prime), tuple(probs)
    )


def aggregate(a_matrix: AMatrix, channel_input: np.ndarray) -> Channel:
    """Deterministic channel g -> A g."""
    inputs = np.atleast_2d(np.asarray(channel_input, dtype=np.int64))
    if inputs.shape[1] != a_matrix.n_generators:
        raise InvalidArgumentError(f"generator vectors need {a_matrix.n_generators} entries, got {inputs.shape[1]}")
    images = inputs @ a_matrix.entries.T
    outs, inverse = np.unique(images, axis=0, return_inverse=True)
    matrix = np.zeros((len(inputs), len(outs)))
    matrix[np.arange(len(inputs)), inverse.reshape(-1)] = 1.0
    return Channel(inputs, outs, matrix)


def _posterior_over_totals(
    params: MvPoissonParams, y: np.ndarray, thin: GeneratorThinning, radix: int
) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mass of each vector of order totals, keyed by a mixed-radix code."""
    gens, probs = _posterior_arrays(params, y)
    codes = thin.order_totals(gens) @ radix ** np.arange(len(thin.order_probs), dtype=np.int64)
    uniq, inverse = np.unique(codes, return_inverse=True)
    return uniq, np.bincount(inverse.reshape(-1), weights=probs, minlength=len(uniq))


def poisson_degradation_channel(spec: PoissonSystemSpec, epsilon: float = 1e-10) -> Channel:
    """The Y -> Z channel (M marginalized out) on the truncated support of Y.

    Rows are exact finite mixtures, so each sums to one; truncation only
    limits which inputs are tabulated.
    """
    report = check_poisson(spec)
    if not report.y_dominates:
        if not report.order_ok:
            raise ConstructionInfeasibleError(f"d1'={spec.d1_prime} < d2'={spec.d2_prime}")
        raise ConstructionInfeasibleError(f"SNR condition fails at orders {report.failing_orders()}")
    thin = generator_thinning(spec)
    y_support = conditional_table(spec, "Y", epsilon).support
    radix = int(y_support.sum(axis=1).max()) + 1
    # The posterior does not depend on m; evaluate it with the raw SNRs (m = 1).
    ref = spec.params("Y", 1.0)
    posts = _parallel.pmap(lambda y: _posterior_over_totals(ref, y, thin, radix), list(y_support))

    codes = np.concatenate([c for c, _ in posts])
    weights = np.concatenate([w for _, w in posts])
    rows = np.repeat(np.arange(len(posts)), [len(c) for c, _ in posts])
    uniq, cols = np.unique(codes, return_inverse=True)
    mix = np.zeros((len(y_support), len(uniq)))
    mix[rows, cols.reshape(-1)] = weights
    totals = np.column_stack([(uniq // radix**j) % radix for j in range(len(thin.order_probs))])

    # Z distribution for each vector of order totals: thinning then aggregation.
    z_rows = []
    for key in totals:
        zg = thin.row_from_totals(key)
        z_points = zg.support @ thin.z_matrix.entries.T
        z_rows.append(FinitePmf(*_merge_points(z_points, zg.probs)))
    by_totals = _stack_rows(totals, z_rows)
    return Channel(y_support, by_totals.output_support, mix @ by_totals.matrix)


def _merge_points(points: np.ndarray, probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    uniq, inverse = np.unique(points, axis=0, return_inverse=True)
    merged = np.zeros(len(uniq))
    np.add.at(merged, inverse.reshape(-1), probs)
    return uniq, merged


# -- multinomial construction ------------------------------------------------


def compound_multinomial_marginal(
    n: int, p: Sequence[float], q: Sequence[float], index_set: Sequence[int]
) -> FinitePmf:
    """Law of Z when Y ~ Mult(n, p) and Z | Y ~ Mult(sum of Y over ``index_set``, q).

    The last class of Z also collects the counts of Y outside ``index_set``,
    so Z ~ Mult(n, q*) with q*_i = (sum_I p) q_i for i < last.  ``index_set``
    holds 0-based class indices of p.
    """
    p = _check_prob_vector(p)
    q = _check_prob_vector(q)
    idx = sorted(set(int(i) for i in index_set))
    if any(i < 0 or i >= len(p) for i in idx):
        raise InvalidArgumentError(f"index_set {list(index_set)} is not a subset of 0..{len(p) - 1}")
    if n < 0:
        raise InvalidArgumentError("negative number of trials")
    w = float(p[idx].sum()) if idx else 0.0
    qstar = np.append(w * q[:-1], 0.0)
    qstar[-1] = max(0.0, 1.0 - w * float(q[:-1].sum()))
    qstar /= qstar.sum()
    return multinomial_distribution(n, qstar)


def thinning_probabilities(spec: MultinomialSystemSpec) -> tuple[int, np.ndarray]:
    """Excluded Y class (lowest index among the minima) and the thinning vector p_z*."""
    report = check_multinomial(spec)
    if not report.y_dominates:
        raise ConstructionInfeasibleError(
            f"min p_z = {report.minima[0]!r} is below min p_y = {report.minima[1]!r}"
        )
    excluded = int(np.argmin(spec.p_y))
    kept = float(spec.p_y.sum() - spec.p_y[excluded])
    s_z = len(spec.p_z)
    if s_z == 1:
        return excluded, np.array([1.0])
    head = spec.p_z[:-1] / kept
    last = max(0.0, 1.0 - float(spec.p_z[:-1].sum()) / kept)
    pstar = np.append(head, last)
    return excluded, pstar / pstar.sum()


def thinned_counts(spec: MultinomialSystemSpec, y: Sequence[int]) -> FinitePmf:
    """Law of the thinning draw Mult(sum of y outside the excluded class, p_z*), before absorption."""
    excluded, pstar = thinning_probabilities(spec)
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (len(spec.p_y),) or np.any(y < 0):
        raise InvalidArgumentError(f"y must be a nonnegative vector of length {len(spec.p_y)}")
    return multinomial_distribution(int(y.sum() - y[excluded]), pstar)


def _multinomial_row(y: np.ndarray, excluded: int, pstar: np.ndarray) -> FinitePmf:
    total = int(y.sum())
    trials = total - int(y[excluded])
    if len(pstar) == 1:
        return FinitePmf(np.array([[total]]), np.array([1.0]))
    law = multinomial_distribution(trials, pstar)
    # The last class also absorbs the excluded class, so every row keeps sum(z) = sum(y) = m.
    support = law.support.copy()
    support[:, -1] = total - support[:, :-1].sum(axis=1)
    return FinitePmf(support, law.probs)


def multinomial_degradation_channel(spec: MultinomialSystemSpec) -> Channel:
    excluded, pstar = thinning_probabilities(spec)
    y_support = conditional_table(spec, "Y", 0.5).support
    rows = [_multinomial_row(y, excluded, pstar) for y in y_support]
    return _stack_rows(y_support, rows)


def degradation_channel(spec: SystemSpec, epsilon: float = 1e-10) -> Channel:
    if isinstance(spec, PoissonSystemSpec):
        return poisson_degradation_channel(spec, epsilon)
    return multinomial_degradation_channel(spec)


# -- certificates ------------------------------------------------------------


DEFAULT_TOLERANCES = {
    "poisson": {"tv": 1e-7, "mi": 1e-6},
    "multinomial": {"tv": 1e-12, "mi": 1e-12},
}


@dataclass(frozen=True)
class DegradationCertificate:
    max_tv: float
    conditional_mi: float
    tv_tolerance: float
    mi_tolerance: float
    truncation_tail: float  # worst per-m omitted mass of Y plus Z

    @property
    def tolerance_used(self) -> tuple[float, float]:
        return (self.tv_tolerance, self.mi_tolerance)

    @property
    def passed(self) -> bool:
        return self.max_tv <= self.tv_tolerance and self.conditional_mi <= self.mi_tolerance


def markov_cmi(pmy: np.ndarray, channel_rows: np.ndarray, chunk: int = 256) -> float:
    """I(M;Z|Y) in bits for p(m, y, z) = pmy[m, y] * channel_rows[y, z].

    Evaluated from the full three-way table, one block of y values at a time
    (y is the conditioning variable, so blocks are independent).
    """
    total = 0.0
    for start in range(0, pmy.shape[1], chunk):
        a = pmy[:, start:start + chunk]
        c = channel_rows[start:start + chunk]
        p = a[:, :, None] * c[None, :, :]
        total += cmi_array(p.transpose(0, 2, 1))
    return total


def verify_degradation(
    spec: SystemSpec,
    channel: Channel,
    epsilon: float = 1e-10,
    tol: float | None = None,
    mi_tol: float | None = None,
) -> DegradationCertificate:
    defaults = DEFAULT_TOLERANCES[spec.kind]
    tol = defaults["tv"] if tol is None else tol
    mi_tol = defaults["mi"] if mi_tol is None else mi_tol
    y_tab = conditional_table(spec, "Y", epsilon)
    z_tab = conditional_table(spec, "Z", epsilon)
    if channel.input_support.shape[1] != y_tab.support.shape[1]:
        raise InvalidArgumentError("channel input dimension does not match Y")
    if channel.output_support.shape[1] != z_tab.support.shape[1]:
        raise InvalidArgumentError("channel output dimension does not match Z")
    rows = _index_rows(channel.input_support, y_tab.support)
    if np.any(rows < 0):
        missing = y_tab.support[rows < 0][0].tolist()
        raise InvalidArgumentError(f"channel has no row for Y outcome {missing}")
    c = channel.matrix[rows]
    composed = y_tab.matrix @ c

    out_union, pos = _union_positions(channel.output_support, z_tab.support)
    a = np.zeros((len(spec.m_pmf), len(out_union)))
    b = np.zeros_like(a)
    a[:, pos[0]] = composed
    b[:, pos[1]] = z_tab.matrix
    max_tv = float(0.5 * np.abs(a - b).sum(axis=1).max())

    pmy = spec.m_pmf.probs[:, None] * y_tab.matrix
    cmi = clamp_nonnegative(markov_cmi(pmy, c), "I(M;Z|Y)")
    tail = float((y_tab.tails + z_tab.tails).max())
    # The TV tolerance never drops below the mass the truncation left out.
    return DegradationCertificate(max_tv, cmi, max(tol, tail), mi_tol, tail)


def _union_positions(*supports: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    union, inverse = np.unique(np.vstack(supports), axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    out, start = [], 0
    for s in supports:
        out.append(inverse[start:start + len(s)])
        start += len(s)
    return union, out
