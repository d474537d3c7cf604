"""Self-contained solver for small dense linear SDPs of the form

    minimize    trace(C S)
    subject to  S >= 0,   G0 + Lam(S) >= 0,

with one symmetric m x m matrix variable S and an affine symmetric-valued map
Lam.  The solver is a primal log-det barrier path-following method: for
increasing t it minimizes

    t * <C, S> - log det(G0 + Lam(S)) - log det(S)

by damped Newton steps in svec coordinates, where svec uses a sqrt(2)-scaled
off-diagonal basis so the Euclidean inner product equals the trace inner
product.  The barrier parameter follows t <- mu * t (mu = 10) until
(p + m) / t falls below the requested gap tolerance; (p + m) / t is returned
as a bound on the suboptimality of the final iterate.

Feasibility (phase 1) minimizes an auxiliary scalar s over the relaxed
constraints G0 + Lam(S) + s I >= 0, S + s I >= 0 with the same machinery; a
trust-region block keeps the phase-1 variable bounded.  Problems whose feasible
set has an empty interior (the constraint can be met but never strictly) are
reported as ``numerical_failure`` with ``no_strict_interior`` in the
diagnostics rather than solved, since a log-det barrier has nothing to work
with there.

Everything is deterministic: identical inputs produce bitwise-identical
solutions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .matlib import Array, as_square, frob, symmetrize

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical_failure"

#: Barrier defaults.  The same values are published in the CLI docs; they are
#: not exposed as knobs because the problems here are tiny and uniform.
T0 = 1.0
MU = 10.0
NEWTON_TOL = 1e-10          # stop inner loop when decrement^2 / 2 falls below
ARMIJO = 0.3
BACKTRACK = 0.5
MAX_NEWTON = 200

#: Phase-1 margins are measured relative to 1 + ||G0||_F.  Infeasibility is
#: declared only below -INFEAS_RTOL; margins inside (-INFEAS_RTOL, STRICT_RTOL)
#: are treated as "no strict interior".
INFEAS_RTOL = 1e-8
STRICT_RTOL = 1e-9

#: Phase-1 trust-region radius on ||svec(S)||.
PHASE1_RADIUS = 1e8


def sym_basis_indices(m: int) -> list[tuple[int, int]]:
    """Upper-triangle (i, j) pairs, row-major, indexing the svec basis."""
    return [(i, j) for i in range(m) for j in range(i, m)]


def svec(a: Array) -> Array:
    a = np.asarray(a, dtype=float)
    m = a.shape[0]
    out = np.empty(m * (m + 1) // 2)
    for k, (i, j) in enumerate(sym_basis_indices(m)):
        out[k] = a[i, i] if i == j else np.sqrt(2.0) * a[i, j]
    return out


def smat(v: Array, m: int) -> Array:
    v = np.asarray(v, dtype=float)
    out = np.zeros((m, m))
    for k, (i, j) in enumerate(sym_basis_indices(m)):
        if i == j:
            out[i, i] = v[k]
        else:
            out[i, j] = out[j, i] = v[k] / np.sqrt(2.0)
    return out


def sym_basis(m: int) -> Array:
    """Stack of the d = m(m+1)/2 svec basis matrices E_k."""
    d = m * (m + 1) // 2
    basis = np.zeros((d, m, m))
    for k, (i, j) in enumerate(sym_basis_indices(m)):
        if i == j:
            basis[k, i, i] = 1.0
        else:
            basis[k, i, j] = basis[k, j, i] = 1.0 / np.sqrt(2.0)
    return basis


@dataclass(frozen=True)
class SdpProblem:
    """min trace(cost * S) s.t. S >= 0 and constant_block + Lam(S) >= 0.

    ``lin_map`` holds the image of each svec basis element: an array of shape
    (d, p, p) with d = var_dim (var_dim + 1) / 2, so that
    Lam(S) = sum_k svec(S)_k lin_map[k].
    """

    var_dim: int
    cost: Array
    constant_block: Array
    lin_map: Array

    def __post_init__(self):
        m = self.var_dim
        d = m * (m + 1) // 2
        cost = symmetrize(as_square(self.cost, "cost"))
        g0 = symmetrize(as_square(self.constant_block, "constant_block"))
        lam = np.asarray(self.lin_map, dtype=float)
        if cost.shape != (m, m):
            raise ValueError(f"cost has shape {cost.shape}, expected ({m}, {m})")
        if lam.shape != (d, g0.shape[0], g0.shape[0]):
            raise ValueError(f"lin_map has shape {lam.shape}, expected "
                             f"({d}, {g0.shape[0]}, {g0.shape[0]})")
        for k in range(d):
            if frob(lam[k] - lam[k].T) > 1e-12 * (1.0 + frob(lam[k])):
                raise ValueError(f"lin_map[{k}] is not symmetric")
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "constant_block", g0)
        object.__setattr__(self, "lin_map", lam)

    @property
    def block_dim(self) -> int:
        return self.constant_block.shape[0]

    def constraint(self, S: Array) -> Array:
        """G0 + Lam(S)."""
        return symmetrize(self.constant_block
                          + np.tensordot(svec(S), self.lin_map, axes=1))

    def scale(self) -> float:
        return 1.0 + frob(self.constant_block)


@dataclass(frozen=True)
class Phase1Result:
    S_strict: Array
    margin: float               # min eigenvalue over both constraint blocks
    margin_rel: float           # margin / (1 + ||G0||_F)
    margin_upper_rel: float     # certified upper bound on the best margin
    status: str                 # strict | marginal | infeasible


@dataclass(frozen=True)
class SdpSolution:
    S_opt: Array | None
    objective: float
    gap_bound: float
    status: str
    phase1_margin: float
    diagnostics: dict = field(default_factory=dict)


class _Block:
    """One LMI block const + sum_k w_k basis_k over the working variable w."""

    def __init__(self, const: Array, basis: Array):
        self.const = const
        self.basis = basis

    def value(self, w: Array) -> Array:
        return symmetrize(self.const + np.tensordot(w, self.basis, axes=1))


def _chol_or_none(a: Array):
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return None


def _barrier(blocks: list[_Block], w: Array):
    """-sum log det over blocks, or None when w is not strictly feasible."""
    total = 0.0
    for blk in blocks:
        L = _chol_or_none(blk.value(w))
        if L is None:
            return None
        total -= 2.0 * float(np.sum(np.log(np.diag(L))))
    return total


def _max_feasible_step(blocks: list[_Block], w: Array, delta: Array) -> float:
    """Largest alpha keeping every block positive definite along w + alpha delta
    (fraction-to-boundary limit, via a generalized eigenvalue computation)."""
    alpha_max = np.inf
    for blk in blocks:
        G = blk.value(w)
        L = _chol_or_none(G)
        if L is None:
            return 0.0
        D = np.tensordot(delta, blk.basis, axes=1)
        M = np.linalg.solve(L, np.linalg.solve(L, D.T).T)   # L^{-1} D L^{-T}
        lam_min = float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])
        if lam_min < 0.0:
            alpha_max = min(alpha_max, -1.0 / lam_min)
    return alpha_max


def _center(blocks: list[_Block], cost: Array, w: Array, t: float):
    """Damped-Newton minimization of t * cost^T w + barrier(w).

    Returns (w, newton_steps, ok).
    """
    nw = w.size
    for step in range(MAX_NEWTON):
        grad = t * cost.copy()
        hess = np.zeros((nw, nw))
        for blk in blocks:
            G = blk.value(w)
            L = _chol_or_none(G)
            if L is None:
                return w, step, False
            ident = np.eye(G.shape[0])
            G_inv = np.linalg.solve(L.T, np.linalg.solve(L, ident))
            grad -= np.einsum("kij,ji->k", blk.basis, G_inv)
            N = G_inv @ blk.basis          # stack of G^{-1} A_k
            hess += np.einsum("kij,lji->kl", N, N)
        hess = 0.5 * (hess + hess.T)

        delta = None
        jitter = 0.0
        for _ in range(4):
            try:
                delta = np.linalg.solve(hess + jitter * np.eye(nw), -grad)
                break
            except np.linalg.LinAlgError:
                jitter = max(jitter * 100.0, 1e-12 * (1.0 + np.trace(hess) / nw))
        if delta is None:
            return w, step, False

        decrement2 = float(-grad @ delta)
        if decrement2 < 0.0:
            # Hessian lost definiteness to round-off; retry with a ridge.
            ridge = 1e-10 * (1.0 + np.trace(hess) / nw)
            delta = np.linalg.solve(hess + ridge * np.eye(nw), -grad)
            decrement2 = float(-grad @ delta)
            if decrement2 < 0.0:
                return w, step, True
        if decrement2 / 2.0 <= NEWTON_TOL:
            return w, step, True

        f0 = t * float(cost @ w) + _barrier(blocks, w)
        alpha = min(1.0, 0.99 * _max_feasible_step(blocks, w, delta))
        while alpha >= 1e-14:
            w_try = w + alpha * delta
            bar = _barrier(blocks, w_try)
            if bar is not None:
                f_try = t * float(cost @ w_try) + bar
                if f_try <= f0 - ARMIJO * alpha * decrement2:
                    break
            alpha *= BACKTRACK
        else:
            return w, step, False
        w = w + alpha * delta
    return w, MAX_NEWTON, True


def _follow_path(blocks: list[_Block], cost: Array, w0: Array, gap_tol: float,
                 trace: Callable[[str], None] | None,
                 early_stop: Callable[[Array], bool] | None = None,
                 label: str = "phase2"):
    """Outer barrier loop.  Returns (w, t_final, records, ok)."""
    nu = sum(blk.const.shape[0] for blk in blocks)
    w, t = w0.copy(), T0
    records = []
    for _ in range(64):
        w, steps, ok = _center(blocks, cost, w, t)
        gap = nu / t
        obj = float(cost @ w)
        records.append({"t": t, "objective": obj, "gap_bound": gap,
                        "newton_steps": steps})
        if trace is not None:
            trace(f"{label} t={t:.6e} objective={obj:.12e} gap_bound={gap:.3e} "
                  f"newton_steps={steps}")
        if not ok:
            return w, t, records, False
        if early_stop is not None and early_stop(w):
            return w, t, records, True
        if gap <= gap_tol:
            return w, t, records, True
        t *= MU
    return w, t, records, False


def phase1(problem: SdpProblem, trace: Callable[[str], None] | None = None) -> Phase1Result:
    """Find a strictly feasible S, or certify (near-)infeasibility.

    Minimizes the auxiliary scalar s subject to G0 + Lam(S) + s I >= 0 and
    S + s I >= 0, starting from S = I and s large; -s at the optimum is the
    best achievable margin.  A trust-region block bounds ||svec(S)|| so the
    minimization cannot drift to infinity along unbounded feasible directions.
    """
    m, p, d = problem.var_dim, problem.block_dim, problem.lin_map.shape[0]
    scale = problem.scale()
    e_basis = sym_basis(m)

    # working variable w = (svec(S), s)
    g_basis = np.concatenate([problem.lin_map, np.eye(p)[None, :, :]], axis=0)
    s_basis = np.concatenate([e_basis, np.eye(m)[None, :, :]], axis=0)
    radius = PHASE1_RADIUS * scale
    tr_basis = np.zeros((d + 1, d + 1, d + 1))
    for k in range(d):
        tr_basis[k, k, d] = tr_basis[k, d, k] = 1.0
    tr_const = radius * np.eye(d + 1)

    blocks = [_Block(problem.constant_block, g_basis),
              _Block(np.zeros((m, m)), s_basis),
              _Block(tr_const, tr_basis)]

    w0 = np.zeros(d + 1)
    w0[:d] = svec(np.eye(m))
    g_at_identity = problem.constraint(np.eye(m))
    lam_min = min(float(np.linalg.eigvalsh(g_at_identity)[0]), 1.0)
    w0[d] = max(0.0, -lam_min) + 1.0

    cost = np.zeros(d + 1)
    cost[d] = 1.0

    nu = p + m + d + 1
    gap_tol = max(1e-12, 1e-10 * scale)

    def deep_enough(w: Array) -> bool:
        return w[d] <= -0.05 * scale

    w, t, _, ok = _follow_path(blocks, cost, w0, gap_tol, trace,
                               early_stop=deep_enough, label="phase1")
    S = smat(w[:d], m)
    margin = min(float(np.linalg.eigvalsh(problem.constraint(S))[0]),
                 float(np.linalg.eigvalsh(symmetrize(S))[0]))
    margin_rel = margin / scale
    # -w[d] is achieved; the certified optimum lies within nu/t of it.
    margin_upper_rel = (-w[d] + nu / t) / scale if ok else float("inf")

    if ok and margin_upper_rel <= -INFEAS_RTOL:
        status = "infeasible"
    elif margin_rel > STRICT_RTOL:
        status = "strict"
    else:
        status = "marginal"
    return Phase1Result(S, margin, margin_rel, margin_upper_rel, status)


def solve(problem: SdpProblem, gap_tol: float = 1e-8,
          trace: Callable[[str], None] | None = None) -> SdpSolution:
    """Phase-1 feasibility then central-path minimization of trace(C S).

    The returned ``gap_bound`` is (p + m) / t_final, a certified bound on the
    suboptimality of ``S_opt``; feasibility of the result is re-verified with
    an independent eigenvalue computation before ``optimal`` is reported.
    """
    p1 = phase1(problem, trace=trace)
    diag: dict = {"phase1_status": p1.status,
                  "phase1_margin_rel": p1.margin_rel,
                  "warnings": []}
    if p1.status == "infeasible":
        return SdpSolution(None, float("nan"), float("inf"), INFEASIBLE,
                           p1.margin, diag)
    if p1.status == "marginal":
        diag["reason"] = "no_strict_interior"
        diag["warnings"].append(
            "feasible set has (numerically) empty interior; barrier cannot run")
        return SdpSolution(None, float("nan"), float("inf"), NUMERICAL_FAILURE,
                           p1.margin, diag)

    m, p = problem.var_dim, problem.block_dim
    blocks = [_Block(problem.constant_block, problem.lin_map),
              _Block(np.zeros((m, m)), sym_basis(m))]
    cost = svec(problem.cost)
    w0 = svec(p1.S_strict)

    w, t, records, ok = _follow_path(blocks, cost, w0, gap_tol, trace)
    S = smat(w, m)
    diag["path"] = records
    diag["outer_iterations"] = len(records)
    if not ok:
        diag["reason"] = "newton_backtracking_floor"
        return SdpSolution(None, float("nan"), float("inf"), NUMERICAL_FAILURE,
                           p1.margin, diag)

    # independent feasibility check of the returned point
    tol = 1e-9 * problem.scale()
    lam_g = float(np.linalg.eigvalsh(problem.constraint(S))[0])
    lam_s = float(np.linalg.eigvalsh(symmetrize(S))[0])
    if lam_g < -tol or lam_s < -tol:
        diag["reason"] = "final_iterate_infeasible"
        diag["min_eigs"] = (lam_g, lam_s)
        return SdpSolution(None, float("nan"), float("inf"), NUMERICAL_FAILURE,
                           p1.margin, diag)

    objective = float(np.trace(problem.cost @ S))
    if p1.margin_rel < 1e-6:
        diag["warnings"].append("phase-1 margin is small; problem is close to "
                                "the feasibility boundary")
    return SdpSolution(symmetrize(S), objective, (p + m) / t, OPTIMAL,
                       p1.margin, diag)
