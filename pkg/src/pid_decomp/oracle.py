"""Numerical BROJA unique information on small truncated instances.

UI(M;Z\\Y) = min I_Q(M;Z|Y) over the couplings Q(m, y, z) whose (M,Y) and
(M,Z) marginals equal the given ones.  For each m the feasible tables form a
transportation polytope (rows P(m, y), columns P(m, z)).  On that set,
I_Q(M;Z|Y) and I_Q(M;Y|Z) differ by the constant I(M;Y) - I(M;Z), so one
solve yields both unique informations.

Default solver: primal log-barrier path following.  For a barrier weight
mu, damped Newton steps minimize I_Q - mu * sum(ln Q) under the marginal
constraints; mu then shrinks tenfold.  The duality gap of a centered point
is at most mu times the number of cells, which gives the stopping rule.
Each stage ends on an exactly projected iterate, and only stages that lower
the objective are accepted, so the returned history is monotone.

Alternative solver: mirror descent in the entropy geometry.  A step
multiplies Q by exp(-eta * grad), with grad = ln Q(m|y,z); feasibility is
then restored by scaling every m block to its row and column sums (the KL
projection onto the polytope): alternating sweeps, then Newton on the
scaling dual for blocks that have not reached the fixed point.  Step sizes
backtrack until the objective decreases.  It is cheap per step but stalls
on ill-conditioned instances.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import sparse
from scipy.linalg import lu_factor, lu_solve

from .errors import InfeasibleProblemError, InvalidArgumentError
from ._parallel import pmap
from .information import InfoValue, clamp_nonnegative, cmi_array, entropy_envelope
from .systems import JointPmf, SystemSpec, _m_support, conditional_table

Target = Literal["Y", "Z"]
Method = Literal["newton", "mirror"]

ORACLE_CELL_CAP = 2_000_000
MARGINAL_TOL = 1e-10
MAX_STEP = 256.0
STOP_WINDOW = 10  # accepted iterates spanned by the objective-change test


@dataclass(frozen=True, eq=False)
class OracleProblem:
    """Pairwise tables p_my[m, y] = P(M=m, Y=y) and p_mz[m, z] = P(M=m, Z=z).

    ``target`` selects the unique information reported as the solution value:
    "Z" for UI(M;Z\\Y) = min I(M;Z|Y), "Y" for UI(M;Y\\Z) = min I(M;Y|Z).
    """

    m_support: np.ndarray
    y_support: np.ndarray
    z_support: np.ndarray
    p_my: np.ndarray
    p_mz: np.ndarray
    target: Target = "Z"
    tail_mass: float = 0.0

    def __post_init__(self):
        p_my = np.asarray(self.p_my, dtype=float)
        p_mz = np.asarray(self.p_mz, dtype=float)
        object.__setattr__(self, "p_my", p_my)
        object.__setattr__(self, "p_mz", p_mz)
        for name in ("m_support", "y_support", "z_support"):
            s = np.asarray(getattr(self, name))
            object.__setattr__(self, name, s[:, None] if s.ndim == 1 else s)
        if self.target not in ("Y", "Z"):
            raise InvalidArgumentError(f"target must be 'Y' or 'Z', got {self.target!r}")
        if p_my.ndim != 2 or p_mz.ndim != 2 or p_my.shape[0] != p_mz.shape[0]:
            raise InvalidArgumentError(f"pairwise tables must be 2-d with a shared M axis, got {p_my.shape} and {p_mz.shape}")
        if (len(self.m_support), len(self.y_support), len(self.z_support)) != (p_my.shape[0], p_my.shape[1], p_mz.shape[1]):
            raise InvalidArgumentError("supports do not match the pairwise table shapes")
        if np.any(p_my < 0) or np.any(p_mz < 0):
            raise InvalidArgumentError("pairwise tables must be nonnegative")
        gap = float(np.abs(p_my.sum(axis=1) - p_mz.sum(axis=1)).max())
        if gap > MARGINAL_TOL:
            raise InfeasibleProblemError(f"M-marginals of P(M,Y) and P(M,Z) differ by {gap!r}; the coupling set is empty")

    @classmethod
    def from_tables(cls, p_my, p_mz, target: Target = "Z") -> "OracleProblem":
        """Problem over index supports 0..n-1 for arbitrary pairwise tables."""
        p_my = np.asarray(p_my, dtype=float)
        p_mz = np.asarray(p_mz, dtype=float)
        return cls(np.arange(p_my.shape[0]), np.arange(p_my.shape[1]), np.arange(p_mz.shape[1]), p_my, p_mz, target)

    @property
    def n_cells(self) -> int:
        return self.p_my.shape[0] * self.p_my.shape[1] * self.p_mz.shape[1]

    def independent_coupling(self) -> np.ndarray:
        """Q0[m, y, z] = P(m) P(y|m) P(z|m): always feasible."""
        pm = self.p_my.sum(axis=1)
        safe = np.where(pm > 0, pm, 1.0)
        return self.p_my[:, :, None] * self.p_mz[:, None, :] / safe[:, None, None]


def build_problem(spec: SystemSpec, epsilon: float = 1e-8, target: Target = "Z") -> OracleProblem:
    """Pairwise marginals of a system on truncated supports.

    Each truncated conditional is rescaled to total mass one so that both
    sides carry the same M-marginal; the largest rescaling is kept as
    ``tail_mass``.
    """
    y = conditional_table(spec, "Y", epsilon)
    z = conditional_table(spec, "Z", epsilon)
    kept = np.concatenate([y.matrix.sum(axis=1), z.matrix.sum(axis=1)])
    if np.any(kept < 1.0 - 10 * epsilon):
        raise InvalidArgumentError(f"truncation kept only {kept.min()!r} of a conditional's mass at epsilon={epsilon}")
    pm = spec.m_pmf.probs
    p_my = pm[:, None] * y.matrix / y.matrix.sum(axis=1, keepdims=True)
    p_mz = pm[:, None] * z.matrix / z.matrix.sum(axis=1, keepdims=True)
    tail = float(max(y.tails.max(), z.tails.max()))
    return OracleProblem(_m_support(spec), y.support, z.support, p_my, p_mz, target, tail)


@dataclass(frozen=True, eq=False)
class OracleSolution:
    q: JointPmf
    ui_value: InfoValue  # the target's unique information
    ui_y: InfoValue  # min I(M;Y|Z), evaluated at q
    ui_z: InfoValue  # min I(M;Z|Y), evaluated at q
    start_value: float  # objective I(M;Z|Y) at the independent coupling
    iterations: int
    converged: bool
    feasibility_violation: float
    history: tuple[float, ...]  # accepted objective values I(M;Z|Y), bits


def _objective(q: np.ndarray) -> float:
    """I_Q(M;Z|Y) in bits; q is indexed [m, y, z]."""
    return cmi_array(q.transpose(0, 2, 1))


def _violation(q: np.ndarray, p_my: np.ndarray, p_mz: np.ndarray) -> float:
    return float(max(np.abs(q.sum(axis=2) - p_my).max(), np.abs(q.sum(axis=1) - p_mz).max()))


def _rescale(current: np.ndarray, wanted: np.ndarray) -> np.ndarray:
    return np.divide(wanted, current, out=np.zeros_like(current), where=current > 0)


def _sinkhorn(q: np.ndarray, p_my: np.ndarray, p_mz: np.ndarray, feas_tol: float, sweeps: int) -> tuple[np.ndarray, float]:
    viol = np.inf
    for _ in range(sweeps):
        q *= _rescale(q.sum(axis=2), p_my)[:, :, None]
        q *= _rescale(q.sum(axis=1), p_mz)[:, None, :]
        viol = _violation(q, p_my, p_mz)
        if viol < feas_tol or not np.isfinite(viol):
            break
    return q, viol


def scale_block(k: np.ndarray, rows: np.ndarray, cols: np.ndarray, tol: float, max_iter: int = 200) -> np.ndarray:
    """diag(e^u) k diag(e^v) with the given row and column sums.

    Newton's method on the convex dual phi(u, v) = sum k e^(u+v) - rows.u - cols.v
    with Armijo backtracking.  Converges quadratically where alternating scaling
    crawls (nearly decomposable tables, e.g. close to a permutation).
    """
    ri, ci = np.flatnonzero(rows > 0), np.flatnonzero(cols > 0)
    out = np.zeros_like(k)
    if len(ri) == 0 or len(ci) == 0:
        return out
    sub = k[np.ix_(ri, ci)]
    r, c = rows[ri], cols[ci]
    logk = np.full(sub.shape, -np.inf)
    logk[sub > 0] = np.log(sub[sub > 0])
    nr = len(ri)

    def evaluate(u, v):
        # Overshooting trial points overflow to inf and fail the Armijo test.
        with np.errstate(over="ignore", invalid="ignore"):
            q = np.exp(logk + u[:, None] + v[None, :])
            return q, q.sum() - r @ u - c @ v

    u = np.log(r) - np.log(np.maximum(sub.sum(axis=1), 1e-300))
    v = np.zeros(len(ci))
    q, f = evaluate(u, v)
    for _ in range(max_iter):
        qr, qc = q.sum(axis=1), q.sum(axis=0)
        if max(np.abs(qr - r).max(), np.abs(qc - c).max()) < tol:
            break
        # v[-1] is pinned to 0 to remove the (u + t, v - t) gauge direction.
        g = np.concatenate([qr - r, (qc - c)[:-1]])
        h = np.diag(np.concatenate([qr, qc[:-1]]))
        h[:nr, nr:] = q[:, :-1]
        h[nr:, :nr] = q[:, :-1].T
        try:
            d = np.linalg.solve(h, -g)
        except np.linalg.LinAlgError:
            d = np.linalg.lstsq(h, -g, rcond=None)[0]
        du, dv = d[:nr], np.append(d[nr:], 0.0)
        t, slope = 1.0, float(g @ d)
        while t > 1e-12:
            q_new, f_new = evaluate(u + t * du, v + t * dv)
            if f_new <= f + 1e-4 * t * slope:
                break
            t /= 2
        else:
            break
        u, v, q, f = u + t * du, v + t * dv, q_new, f_new
    out[np.ix_(ri, ci)] = q
    return out


def project(q: np.ndarray, p_my: np.ndarray, p_mz: np.ndarray, feas_tol: float, sweeps: int = 100) -> tuple[np.ndarray, float]:
    """KL projection onto the coupling set: scale every m block to its row and column sums.

    A few alternating sweeps first; blocks still off target are finished by
    Newton scaling, in parallel across m.
    """
    q, viol = _sinkhorn(q.copy(), p_my, p_mz, feas_tol, sweeps)
    if viol < feas_tol or not np.isfinite(viol):
        return q, viol
    blocks = pmap(lambda m: scale_block(q[m], p_my[m], p_mz[m], feas_tol / 4), range(q.shape[0]), min_batch=4)
    q = np.stack(blocks)
    return q, _violation(q, p_my, p_mz)


def _step(q: np.ndarray, g: np.ndarray, eta: float) -> np.ndarray:
    """q * exp(-eta * g), rescaled per (m, y) row to avoid overflow.

    Row factors are undone by the projection, so they do not change the result.
    """
    pos = q > 0
    logq = np.full(q.shape, -np.inf)
    logq[pos] = np.log(q[pos]) - eta * g[pos]
    top = logq.max(axis=2, keepdims=True)
    top[~np.isfinite(top)] = 0.0
    return np.exp(logq - top)


def _gradient(q: np.ndarray) -> np.ndarray:
    """d I(M;Z|Y) / dQ up to a constant factor: ln Q(m|y,z); zero off the support."""
    qyz = q.sum(axis=0, keepdims=True)
    pos = q > 0
    g = np.zeros_like(q)
    g[pos] = np.log(q[pos]) - np.log(np.broadcast_to(qyz, q.shape)[pos])
    return g


def _solve_mirror(problem: OracleProblem, q, viol, tol, max_iter, feas_tol, eta0):
    p_my, p_mz = problem.p_my, problem.p_mz
    f = _objective(q)
    history = [f]
    eta = eta0
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        g = _gradient(q)
        accepted = False
        while eta >= 1e-10:
            cand, cviol = project(_step(q, g, eta), p_my, p_mz, feas_tol)
            fc = _objective(cand) if cviol < feas_tol else np.inf
            if fc <= f:
                accepted = True
                break
            eta /= 2
        if not accepted:
            # No descent step exists at this resolution: a stationary point.
            converged = viol < feas_tol
            break
        q, f, viol = cand, fc, cviol
        history.append(f)
        eta = min(eta * 2, MAX_STEP)
        # The objective is nonnegative, so f < tol already bounds any further change.
        change = history[-STOP_WINDOW - 1] - f if len(history) > STOP_WINDOW else f
        if min(change, f) < tol and viol < feas_tol:
            converged = True
            break
    return q, viol, history, it, converged


class _NewtonSystem:
    """Index bookkeeping for barrier Newton steps on the active cells.

    Active entries are the (m, y, z) with P(m, y) > 0 and P(m, z) > 0.  The
    constraints are every positive row sum P(m, y) and every positive column
    sum P(m, z) except one per m, which the others imply.
    """

    def __init__(self, p_my: np.ndarray, p_mz: np.ndarray):
        self.active = (p_my[:, :, None] > 0) & (p_mz[:, None, :] > 0)
        m, y, z = np.nonzero(self.active)
        self.yz = (y, z)
        cells = self.active.any(axis=0)
        cell_id = np.full(cells.shape, -1)
        cell_id[cells] = np.arange(int(cells.sum()))
        self.cell = cell_id[y, z]
        self.n_cells = int(cells.sum())
        rows = p_my > 0
        cols = p_mz > 0
        for k in range(len(cols)):
            positive = np.flatnonzero(cols[k])
            if len(positive):
                cols[k, positive[-1]] = False
        row_id = np.full(rows.shape, -1)
        row_id[rows] = np.arange(int(rows.sum()))
        col_id = np.full(cols.shape, -1)
        col_id[cols] = int(rows.sum()) + np.arange(int(cols.sum()))
        kept = col_id[m, z] >= 0
        self.entry = np.concatenate([np.arange(len(m)), np.flatnonzero(kept)])
        self.constraint = np.concatenate([row_id[m, y], col_id[m, z][kept]])
        self.n_constraints = int(rows.sum() + cols.sum())
        self.b = sparse.csr_matrix(
            (np.ones(len(self.entry)), (self.constraint, self.entry)), shape=(self.n_constraints, len(m))
        )
        self.targets = np.concatenate([p_my[rows], p_mz[cols]])

    def objective(self, qa: np.ndarray) -> tuple[float, np.ndarray]:
        """Sum of q ln Q(m|y,z) in nats, with its gradient; equals I(M;Z|Y) up to a constant."""
        s = np.bincount(self.cell, qa, self.n_cells)[self.cell]
        g = np.log(qa) - np.log(s)
        return float(qa @ g), g

    def direction(self, qa: np.ndarray, g: np.ndarray, mu: float) -> np.ndarray:
        """Newton step for f - mu * sum(ln q) that also removes the marginal residual.

        Per (y, z) cell the Hessian of f is diag(1/q) - 11^T / sum(q), which is
        singular along the cell's own scaling.  With t_c = 1^T d_c / sum(q_c)
        the step is d = dinv * (t - B^T lam - grad) where (t, lam) solve the
        quasi-definite system [[den, G^T], [G, -P]].  Every entry of that system
        is bounded, unlike the plain Schur complement of the Hessian, so its
        residual drives iterative refinement of the faster reduced solve.
        """
        grad = g - mu / qa
        dinv = qa * qa / (qa + mu)
        den = np.bincount(self.cell, qa * mu / (qa + mu), self.n_cells)
        gmat = sparse.csr_matrix(
            (dinv[self.entry], (self.constraint, self.cell[self.entry])), shape=(self.n_constraints, self.n_cells)
        )
        pmat = self.b @ sparse.diags(dinv) @ self.b.T
        scaled = gmat @ sparse.diags(1.0 / den)
        schur = (pmat + scaled @ gmat.T).toarray()
        sc = 1.0 / np.sqrt(np.diag(schur))
        factor = lu_factor(schur * sc[:, None] * sc[None, :])

        def solve(rt, rl):
            lam = sc * lu_solve(factor, sc * (scaled @ rt - rl))
            return (rt - gmat.T @ lam) / den, lam

        rt = -np.bincount(self.cell, dinv * grad, self.n_cells)
        rl = self.targets - self.b @ qa + self.b @ (dinv * grad)
        t, lam = solve(rt, rl)
        for _ in range(3):
            et, el = solve(rt - den * t - gmat.T @ lam, rl - gmat @ t + pmat @ lam)
            t, lam = t + et, lam + el
        return dinv * (t[self.cell] - self.b.T @ lam - grad)


def _solve_newton(problem: OracleProblem, q, viol, tol, max_iter, feas_tol):
    """Primal log-barrier path following; each stage ends on an exactly projected iterate."""
    p_my, p_mz = problem.p_my, problem.p_mz
    system = _NewtonSystem(p_my, p_mz)
    act = system.active
    n = int(act.sum())
    f = _objective(q)
    history = [f]
    best, best_viol = q, viol
    mu = 0.1 / n
    it = 0
    converged = False

    def barrier(x, mu):
        return system.objective(x)[0] - mu * float(np.sum(np.log(x))) if np.all(x > 0) else np.inf

    qa = q[act]
    while it < max_iter:
        # Center for this mu.
        while it < max_iter:
            it += 1
            g = system.objective(qa)[1]
            d = system.direction(qa, g, mu)
            decrement = -float((g - mu / qa) @ d)
            if decrement / 2 <= max(1e-14, 1e-3 * mu * n):
                break
            neg = d < 0
            t = min(1.0, 0.99 * float(np.min(-qa[neg] / d[neg]))) if neg.any() else 1.0
            phi0 = barrier(qa, mu)
            while t > 1e-14 and barrier(qa + t * d, mu) > phi0 - 0.25 * t * decrement:
                t /= 2
            if t <= 1e-14:
                break
            qa = qa + t * d
        stage = np.zeros_like(q)
        stage[act] = qa
        stage, sviol = project(stage, p_my, p_mz, feas_tol)
        qa = stage[act]
        fs = _objective(stage)
        change = history[-1] - fs
        if fs <= history[-1] and sviol < feas_tol:
            best, best_viol = stage, sviol
            history.append(fs)
        if mu * n / np.log(2) < tol and change < tol and best_viol < feas_tol:
            converged = True
            break
        mu /= 10.0
    return best, best_viol, history, it, converged


def solve_ui(
    problem: OracleProblem,
    tol: float = 1e-6,
    max_iter: int = 5000,
    feas_tol: float = 1e-9,
    cell_cap: int = ORACLE_CELL_CAP,
    method: Method = "newton",
    eta0: float = 1.0,
) -> OracleSolution:
    """Minimize I_Q(M;Z|Y) over the coupling set.

    ``method="newton"`` (default) follows the log-barrier central path with
    Newton steps, shrinking the barrier weight tenfold per stage.  It stops
    once the barrier bound and the objective change of the last stage are both
    below ``tol``.  ``method="mirror"`` runs entropic mirror descent.  It stops
    when the last STOP_WINDOW accepted steps together lower the objective by
    less than ``tol`` (or the objective itself is below ``tol``), or when no
    step size can lower it.  Mirror descent is cheap per step but can stall far
    from the optimum on ill-conditioned instances.

    Both keep the marginals to ``feas_tol`` on every accepted iterate.  Hitting
    ``max_iter`` (Newton or mirror steps) first returns the best accepted
    iterate with converged=False.
    """
    if problem.n_cells > cell_cap:
        raise InvalidArgumentError(f"dense coupling would have {problem.n_cells} cells (cap {cell_cap})")
    if method not in ("newton", "mirror"):
        raise InvalidArgumentError(f"method must be 'newton' or 'mirror', got {method!r}")
    q, viol = project(problem.independent_coupling(), problem.p_my, problem.p_mz, feas_tol)
    start = _objective(q)
    if method == "newton":
        q, viol, history, it, converged = _solve_newton(problem, q, viol, tol, max_iter, feas_tol)
    else:
        q, viol, history, it, converged = _solve_mirror(problem, q, viol, tol, max_iter, feas_tol, eta0)
    f = history[-1]

    total = float(q.sum())
    joint = JointPmf(
        ("M", "Y", "Z"),
        (problem.m_support, problem.y_support, problem.z_support),
        q / total if abs(total - 1.0) > 1e-12 else q,
        0.0,
    )
    bound = 4 * entropy_envelope(problem.tail_mass, problem.n_cells)
    ui_z = InfoValue(clamp_nonnegative(f, "I_Q(M;Z|Y)"), bound)
    ui_y = InfoValue(clamp_nonnegative(cmi_array(q), "I_Q(M;Y|Z)"), bound)
    return OracleSolution(
        q=joint,
        ui_value=ui_z if problem.target == "Z" else ui_y,
        ui_y=ui_y,
        ui_z=ui_z,
        start_value=start,
        iterations=it,
        converged=converged,
        feasibility_violation=viol,
        history=tuple(history),
    )
