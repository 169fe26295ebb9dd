"""Least-squares solvers for unmixing a pixel against library columns.

All penalized solvers minimize the per-band averaged objective

    (1/(2W)) ||y - S a||^2 + alpha * rho * ||a||_1 + alpha * (1 - rho) / 2 * ||a||_2^2

with ``rho = l1_ratio``. ``rho = 1`` is the LASSO. Setting ``scaled=False`` on
the spec minimizes ``||y - S a||^2 + alpha*rho*||a||_1 + alpha*(1-rho)/2*||a||^2``
instead, which is the same problem with ``alpha`` divided by ``2W``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit
from numpy.typing import NDArray

from .errors import IllPosedError, ValidationError

SOLVER_KINDS = ("ols", "nnls", "lasso", "elasticnet")
DEFAULT_COND_CAP = 1e12
NNLS_GRAD_TOL = 1e-10
# "cd": cyclic coordinate descent. "active-set": exact Lawson-Hanson on the
# Gram matrix, nonnegative problems only; meant for the small subset fits
# inside DFS and BMA.
PENALIZED_METHODS = ("cd", "active-set")


@dataclass(frozen=True)
class SolverSpec:
    kind: str = "lasso"
    alpha: float = 0.0
    l1_ratio: float = 1.0
    nonneg: bool = True
    sum_to_one: bool = False
    tol: float = 1e-7
    max_iter: int = 10000
    scaled: bool = True
    cond_cap: float = DEFAULT_COND_CAP
    method: str = "cd"

    def __post_init__(self) -> None:
        if self.kind not in SOLVER_KINDS:
            raise ValidationError(f"solver kind must be one of {SOLVER_KINDS}, got {self.kind!r}")
        if not (self.alpha >= 0):
            raise ValidationError(f"alpha must be >= 0, got {self.alpha}")
        if not (0.0 <= self.l1_ratio <= 1.0):
            raise ValidationError(f"l1_ratio must lie in [0, 1], got {self.l1_ratio}")
        if not (self.tol > 0):
            raise ValidationError(f"tol must be > 0, got {self.tol}")
        if self.max_iter < 1:
            raise ValidationError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.method not in PENALIZED_METHODS:
            raise ValidationError(f"method must be one of {PENALIZED_METHODS}, got {self.method!r}")
        if self.method == "active-set" and not self.nonneg:
            raise ValidationError("the active-set method only handles nonneg=True")

    def effective_penalties(self, n_bands: int) -> tuple[float, float]:
        """(l1, l2) weights of the scaled objective: l1*||a||_1 + l2/2*||a||^2."""
        alpha = self.alpha if self.scaled else self.alpha / (2.0 * n_bands)
        rho = 1.0 if self.kind == "lasso" else self.l1_ratio
        return alpha * rho, alpha * (1.0 - rho)


@dataclass(frozen=True, eq=False)
class FitResult:
    coefficients: NDArray[np.float64]
    residual: NDArray[np.float64]
    rmse: float
    iterations: int = 0
    converged: bool = True
    objective_history: NDArray[np.float64] = field(default_factory=lambda: np.zeros(0))

    @property
    def rss(self) -> float:
        return float(self.residual @ self.residual)


def _as_problem(S, y) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    S = np.asarray(S, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if S.ndim == 1:
        S = S[:, None]
    if S.ndim != 2 or y.ndim != 1:
        raise ValidationError("design matrix must be 2-D and pixel vector 1-D")
    if S.shape[0] != y.shape[0]:
        raise ValidationError(f"design has {S.shape[0]} bands but pixel has {y.shape[0]}")
    if not (np.all(np.isfinite(S)) and np.all(np.isfinite(y))):
        raise ValidationError("design matrix and pixel must be finite")
    return S, y


def _finish(S, y, coef, iterations=0, converged=True, history=None, sum_to_one=False) -> FitResult:
    if sum_to_one:
        coef = project_simplex(coef)
    residual = y - S @ coef
    rmse = float(np.sqrt(np.mean(residual * residual))) if residual.size else 0.0
    return FitResult(
        coefficients=coef,
        residual=residual,
        rmse=rmse,
        iterations=int(iterations),
        converged=bool(converged),
        objective_history=np.zeros(0) if history is None else history,
    )


def soft_threshold(z: float, t: float) -> float:
    if t < 0:
        raise ValidationError(f"threshold must be >= 0, got {t}")
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


def project_simplex(a) -> NDArray[np.float64]:
    """Euclidean projection onto {a >= 0, sum(a) = 1} (sort-based)."""
    v = np.asarray(a, dtype=np.float64)
    if v.size == 0:
        return v.copy()
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / ks > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def solve_ols(S, y, spec: SolverSpec | None = None) -> FitResult:
    """Unconstrained least squares; refuses ill-posed systems instead of pseudo-inverting."""
    S, y = _as_problem(S, y)
    cond_cap = spec.cond_cap if spec is not None else DEFAULT_COND_CAP
    W, N = S.shape
    if N > W:
        raise IllPosedError(
            f"ill-posed: {N} library spectra but only {W} bands; S^T S is singular, "
            "so least squares has infinitely many solutions and the close fits it finds "
            "rely on physically impossible negative abundances. Use nnls or a sparse technique."
        )
    gram = S.T @ S
    cond = np.linalg.cond(gram) if N else 1.0
    if not np.isfinite(cond) or cond > cond_cap:
        raise IllPosedError(
            f"ill-posed: condition number of S^T S is {cond:.3g} (cap {cond_cap:.3g}); "
            "the normal equations cannot be solved reliably"
        )
    coef, *_ = np.linalg.lstsq(S, y, rcond=None)
    return _finish(S, y, coef, sum_to_one=spec.sum_to_one if spec else False)


def solve_nnls(S, y, spec: SolverSpec | None = None, grad_tol: float = NNLS_GRAD_TOL) -> FitResult:
    """Lawson-Hanson active-set NNLS.

    Stops when every inactive coordinate has ``s_j^T r <= grad_tol``.
    """
    S, y = _as_problem(S, y)
    W, N = S.shape
    max_iter = spec.max_iter if spec is not None else max(3 * N, 50)
    a = np.zeros(N)
    passive = np.zeros(N, dtype=bool)
    blocked = np.zeros(N, dtype=bool)
    iterations = 0
    converged = True
    while True:
        w = S.T @ (y - S @ a)
        cand = ~passive & ~blocked & (w > grad_tol)
        if not cand.any():
            break
        if iterations >= max_iter:
            converged = False
            break
        iterations += 1
        j = int(np.argmax(np.where(cand, w, -np.inf)))
        passive[j] = True
        while True:
            idx = np.flatnonzero(passive)
            z = np.zeros(N)
            z[idx] = np.linalg.lstsq(S[:, idx], y, rcond=None)[0]
            if np.all(z[idx] > 0):
                a = z
                break
            neg = np.flatnonzero(passive & (z <= 0))
            ratios = a[neg] / (a[neg] - z[neg])
            k = int(np.argmin(ratios))
            a = a + ratios[k] * (z - a)
            a[neg[k]] = 0.0
            # the entering column may be rejected outright by round-off (ratio 0)
            passive &= a > 0
            a[~passive] = 0.0
        if passive[j]:
            blocked[:] = False
        else:
            blocked[j] = True
    return _finish(S, y, a, iterations, converged, sum_to_one=spec.sum_to_one if spec else False)


@njit(cache=True)
def _grow(buf, n):
    if n < buf.shape[0]:
        return buf
    out = np.empty(2 * buf.shape[0])
    out[: buf.shape[0]] = buf
    return out


@njit(cache=True)
def _objective(a, q, c, yy_half, l1, l2):
    obj = yy_half
    for k in range(a.shape[0]):
        obj += -c[k] * a[k] + 0.5 * a[k] * q[k] + l1 * abs(a[k]) + 0.5 * l2 * a[k] * a[k]
    return obj


@njit(cache=True)
def _cd_kernel(G, c, yy_half, l1, l2, nonneg, tol, max_iter):
    # Cyclic CD. After a sweep that moved something, cycle over the nonzero
    # coordinates only; convergence is declared on a full sweep.
    n = c.shape[0]
    a = np.zeros(n)
    q = np.zeros(n)  # q = G @ a, kept in sync
    history = np.empty(64)
    full = True
    for it in range(max_iter):
        max_change = 0.0
        for j in range(n):
            if not full and a[j] == 0.0:
                continue
            gjj = G[j, j]
            if gjj <= 0.0:
                continue
            old = a[j]
            z = c[j] - (q[j] - gjj * old)
            if z > l1:
                new = (z - l1) / (gjj + l2)
            elif z < -l1 and not nonneg:
                new = (z + l1) / (gjj + l2)
            else:
                new = 0.0
            d = new - old
            if d != 0.0:
                for k in range(n):
                    q[k] += G[k, j] * d
                a[j] = new
                if abs(d) > max_change:
                    max_change = abs(d)
        history = _grow(history, it)
        history[it] = _objective(a, q, c, yy_half, l1, l2)
        if max_change < tol:
            if full:
                return a, it + 1, True, history[: it + 1].copy()
            full = True
        else:
            full = False
    return a, max_iter, False, history[:max_iter].copy()


@njit(cache=True)
def _nnqp_kernel(G, c, yy_half, l1, l2, max_iter):
    # Lawson-Hanson active set for min 1/2 a'Ha - b'a, a >= 0 with
    # H = G + l2*I and b = c - l1: the nonnegative LASSO/ElasticNet, solved exactly.
    n = c.shape[0]
    H = G.copy()
    for j in range(n):
        H[j, j] += l2
    b = c - l1
    a = np.zeros(n)
    passive = np.zeros(n, dtype=np.bool_)
    blocked = np.zeros(n, dtype=np.bool_)
    history = np.empty(64)
    it = 0
    converged = True
    scale = 1.0
    for j in range(n):
        scale = max(scale, abs(b[j]))
    eps = 1e-13 * scale
    while True:
        w = b - H @ a
        j_best = -1
        w_best = eps
        for j in range(n):
            if not passive[j] and not blocked[j] and w[j] > w_best:
                w_best = w[j]
                j_best = j
        if j_best < 0:
            break
        if it >= max_iter:
            converged = False
            break
        passive[j_best] = True
        while True:
            idx = np.flatnonzero(passive)
            z = np.zeros(n)
            sol = np.linalg.lstsq(H[idx][:, idx], b[idx])[0]
            ok = True
            for t in range(idx.shape[0]):
                z[idx[t]] = sol[t]
                if sol[t] <= 0.0:
                    ok = False
            if ok:
                a = z
                break
            k_min = -1
            r_min = np.inf
            for t in range(idx.shape[0]):
                i = idx[t]
                if z[i] <= 0.0:
                    r = a[i] / (a[i] - z[i])
                    if r < r_min:
                        r_min = r
                        k_min = i
            a = a + r_min * (z - a)
            a[k_min] = 0.0
            for i in range(n):
                if passive[i] and a[i] <= 0.0:
                    passive[i] = False
                    a[i] = 0.0
        if passive[j_best]:
            blocked[:] = False
        else:
            blocked[j_best] = True
        q = G @ a
        history = _grow(history, it)
        history[it] = _objective(a, q, c, yy_half, l1, l2)
        it += 1
    return a, it, converged, history[:it].copy()


def fit_gram(gram, corr, yy_half: float, n_bands: int, spec: SolverSpec):
    """Penalized fit on precomputed ``S^T S / W`` and ``S^T y / W``.

    Returns ``(coefficients, iterations, converged, objective_history)``. No
    input validation; callers own that.
    """
    l1, l2 = spec.effective_penalties(n_bands)
    if spec.method == "active-set":
        return _nnqp_kernel(gram, corr, yy_half, l1, l2, spec.max_iter)
    return _cd_kernel(gram, corr, yy_half, l1, l2, spec.nonneg, spec.tol, spec.max_iter)


def solve_penalized(S, y, spec: SolverSpec, gram=None, corr=None) -> FitResult:
    """LASSO / ElasticNet fit (coordinate descent unless ``spec.method`` says otherwise).

    ``gram = S^T S / W`` and ``corr = S^T y / W`` may be passed when the caller
    already has them (subset fits reuse slices of one full Gram matrix).
    """
    S, y = _as_problem(S, y)
    W = S.shape[0]
    if gram is None:
        gram = S.T @ S / W
    if corr is None:
        corr = S.T @ y / W
    coef, iters, converged, history = fit_gram(
        np.ascontiguousarray(gram, dtype=np.float64),
        np.ascontiguousarray(corr, dtype=np.float64),
        0.5 * float(y @ y) / W,
        W,
        spec,
    )
    return _finish(S, y, coef, iters, converged, history, spec.sum_to_one)


def solve_lasso(S, y, spec: SolverSpec) -> FitResult:
    if spec.kind != "lasso":
        raise ValidationError(f"solve_lasso needs kind='lasso', got {spec.kind!r}")
    return solve_penalized(S, y, spec)


def solve_elasticnet(S, y, spec: SolverSpec) -> FitResult:
    if spec.kind != "elasticnet":
        raise ValidationError(f"solve_elasticnet needs kind='elasticnet', got {spec.kind!r}")
    return solve_penalized(S, y, spec)


def solve(S, y, spec: SolverSpec) -> FitResult:
    """Dispatch on ``spec.kind``."""
    if spec.kind == "ols":
        return solve_ols(S, y, spec)
    if spec.kind == "nnls":
        return solve_nnls(S, y, spec)
    return solve_penalized(S, y, spec)


def penalized_objective(S, y, a, spec: SolverSpec) -> float:
    S, y = _as_problem(S, y)
    a = np.asarray(a, dtype=np.float64)
    W = S.shape[0]
    l1, l2 = spec.effective_penalties(W)
    r = y - S @ a
    return float(0.5 * (r @ r) / W + l1 * np.abs(a).sum() + 0.5 * l2 * (a @ a))


def kkt_violation(S, y, a, spec: SolverSpec) -> float:
    """Largest violation of the subgradient optimality conditions of the scaled objective."""
    S, y = _as_problem(S, y)
    a = np.asarray(a, dtype=np.float64)
    W = S.shape[0]
    l1, l2 = spec.effective_penalties(W)
    grad = S.T @ (S @ a - y) / W + l2 * a
    active = a != 0
    viol = np.zeros_like(a)
    viol[active] = np.abs(grad[active] + l1 * np.sign(a[active]))
    inactive = ~active
    if spec.nonneg:
        viol[inactive] = np.maximum(0.0, -(grad[inactive] + l1))
    else:
        viol[inactive] = np.maximum(0.0, np.abs(grad[inactive]) - l1)
    return float(viol.max()) if viol.size else 0.0


def with_alpha(spec: SolverSpec, alpha: float) -> SolverSpec:
    return replace(spec, alpha=alpha)
