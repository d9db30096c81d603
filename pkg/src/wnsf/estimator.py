"""Weighted null-space fitting: reduction of a high-order ARX estimate to a
structured Box-Jenkins (or output-error) model.

Step 2 solves the over-determined Toeplitz system eta = Q(eta) theta by least
squares.  Step 3 re-solves it with the statistically optimal weighting
W = T^-T R T^-1 built from the previous parameter estimate, and may be
iterated.  The ARX order n and the iteration are selected by the quadratic
prediction-error cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, solve_triangular

from .arx import ArxEstimate, estimate_arx
from .lti import (
    BjModel,
    Polynomial,
    RationalFilter,
    filter_signal,
    is_stable,
    toeplitz_matrix,
)
from .simulate import DataSet


class RankDeficientError(np.linalg.LinAlgError):
    """Q lost column rank: non-coprime or over-parametrized model orders."""

    def __init__(self, message, cond=None):
        super().__init__(message)
        self.cond = cond


class IdentificationError(RuntimeError):
    """Every (n, iteration) candidate was infeasible."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class ModelOrders:
    m_f: int
    m_l: int
    m_c: int = 0
    m_d: int = 0

    def __post_init__(self):
        if min(self.m_f, self.m_l, self.m_c, self.m_d) < 0:
            raise ValueError("orders must be nonnegative")
        if self.m_l < 1 or self.m_f < 1:
            raise ValueError("a nontrivial plant needs m_f >= 1 and m_l >= 1")

    @property
    def dim(self) -> int:
        return self.m_f + self.m_l + self.m_c + self.m_d

    @property
    def dyn_dim(self) -> int:
        return self.m_f + self.m_l

    @property
    def is_oe(self) -> bool:
        return self.m_c == 0 and self.m_d == 0


@dataclass
class ThetaEstimate:
    theta: np.ndarray
    orders: ModelOrders
    n_used: int
    iterations: int
    pem_cost: float
    step2_theta: Optional[np.ndarray] = None
    stable_noise_model: bool = True
    reflected: bool = False
    trace: List[dict] = field(default_factory=list)

    @property
    def model(self) -> BjModel:
        o = self.orders
        return BjModel.from_theta(self.theta, o.m_f, o.m_l, o.m_c, o.m_d)

    def to_json(self):
        return {
            "theta": self.theta.tolist(),
            "orders": [self.orders.m_f, self.orders.m_l,
                       self.orders.m_c, self.orders.m_d],
            "n_used": self.n_used,
            "iterations": self.iterations,
            "pem_cost": self.pem_cost,
            "step2_theta": None if self.step2_theta is None
            else self.step2_theta.tolist(),
            "stable_noise_model": self.stable_noise_model,
            "reflected": self.reflected,
            "trace": self.trace,
        }


@dataclass(frozen=True)
class WnsfOptions:
    n_grid: Sequence[int] = (50, 100, 150, 200, 250, 300)
    max_iter: int = 100
    tol: float = 1e-4
    estimate_noise_model: bool = True
    delta_reg: float = 1e-6
    known_zero_ic: bool = False

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if len(self.n_grid) == 0:
            raise ValueError("n_grid must not be empty")


def build_Q(eta: np.ndarray, orders: ModelOrders) -> np.ndarray:
    """Block-Toeplitz matrix mapping theta to the first n high-order
    coefficient relations; layout [0 0 -Qc Qd; -Qf Ql 0 0]."""
    eta = np.asarray(eta, dtype=float)
    n = len(eta) // 2
    if n < max(orders.m_f, orders.m_l, orders.m_c, orders.m_d):
        raise ValueError("ARX order n is below the requested model orders")
    a_poly = Polynomial(np.concatenate([[1.0], eta[:n]]))
    b_poly = Polynomial(np.concatenate([[0.0], eta[n:]]))

    Q = np.zeros((2 * n, orders.dim))
    j = 0
    # a-block rows: a = -T(A) c + d
    if orders.m_c:
        Q[:n, orders.dyn_dim: orders.dyn_dim + orders.m_c] = -toeplitz_matrix(
            a_poly, n, orders.m_c
        )
    if orders.m_d:
        j = orders.dyn_dim + orders.m_c
        Q[: orders.m_d, j: j + orders.m_d] = np.eye(orders.m_d)
    # b-block rows: b = -T(B) f + T(A) l
    Q[n:, : orders.m_f] = -toeplitz_matrix(b_poly, n, orders.m_f)
    Q[n:, orders.m_f: orders.dyn_dim] = toeplitz_matrix(a_poly, n, orders.m_l)
    return Q


def build_T(theta: np.ndarray, n: int, orders: ModelOrders) -> np.ndarray:
    """Residual-dynamics matrix [Tc 0; -Tl Tf]; lower triangular with unit
    diagonal."""
    model = BjModel.from_theta(theta, orders.m_f, orders.m_l,
                               orders.m_c, orders.m_d)
    T = np.zeros((2 * n, 2 * n))
    T[:n, :n] = toeplitz_matrix(model.C, n, n)
    T[n:, :n] = -toeplitz_matrix(model.L, n, n)
    T[n:, n:] = toeplitz_matrix(model.F, n, n)
    return T


def build_T_inverse(theta: np.ndarray, n: int, orders: ModelOrders) -> np.ndarray:
    """Closed-form block inverse [Tc^-1 0; Tf^-1 Tl Tc^-1 Tf^-1].

    Kept for cross-checking; the solver path uses triangular substitution.
    """
    model = BjModel.from_theta(theta, orders.m_f, orders.m_l,
                               orders.m_c, orders.m_d)
    imp = np.zeros(n)
    imp[0] = 1.0
    inv_c = toeplitz_matrix(
        Polynomial(filter_signal(RationalFilter(Polynomial([1.0]), model.C), imp)),
        n, n,
    )
    inv_f = toeplitz_matrix(
        Polynomial(filter_signal(RationalFilter(Polynomial([1.0]), model.F), imp)),
        n, n,
    )
    tl = toeplitz_matrix(model.L, n, n)
    out = np.zeros((2 * n, 2 * n))
    out[:n, :n] = inv_c
    out[n:, :n] = inv_f @ tl @ inv_c
    out[n:, n:] = inv_f
    return out


def _solve_ls(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Least squares via orthogonal factorization; rejects rank deficiency."""
    sol, _, rank, sv = np.linalg.lstsq(A, b, rcond=None)
    if rank < A.shape[1]:
        cond = math.inf if sv[-1] == 0 else sv[0] / sv[-1]
        raise RankDeficientError(
            f"rank-deficient reduction matrix (rank {rank} < {A.shape[1]}); "
            "check for non-coprime or over-parametrized orders",
            cond=cond,
        )
    return sol


def step2_ls(arx: ArxEstimate, orders: ModelOrders) -> ThetaEstimate:
    """Unweighted least-squares reduction of the high-order estimate."""
    Q = build_Q(arx.eta, orders)
    if orders.is_oe:
        theta = _solve_ls(Q[arx.n:, :], arx.b)
    else:
        theta = _solve_ls(Q, arx.eta)
    return _make_estimate(theta, arx, orders, iterations=0)


def step3_wls(arx: ArxEstimate, theta_prev: np.ndarray,
              orders: ModelOrders) -> ThetaEstimate:
    """Weighted re-estimation with W = T^-T R T^-1 built at theta_prev.

    W is never formed: with R = G^T G the problem is the plain least squares
    of (G T^-1 Q, G T^-1 eta).
    """
    _require_stable_weighting(theta_prev, orders)
    n = arx.n
    Q = build_Q(arx.eta, orders)
    T = build_T(theta_prev, n, orders)
    Z = solve_triangular(T, Q, lower=True, unit_diagonal=True)
    z = solve_triangular(T, arx.eta, lower=True, unit_diagonal=True)
    G = cholesky(arx.R_reg if arx.R_reg is not None else arx.R, lower=False)
    theta = _solve_ls(G @ Z, G @ z)
    return _make_estimate(theta, arx, orders, iterations=1)


def step3_wls_oe(arx: ArxEstimate, theta_prev: np.ndarray,
                 orders: ModelOrders) -> ThetaEstimate:
    """No-noise-model variant: only the plant relations are kept and the
    weighting is (Tbar R^-1 Tbar^T)^-1 with Tbar = [-Tl  Tf]."""
    if not orders.is_oe:
        raise ValueError("OE step requires m_c = m_d = 0")
    _require_stable_weighting(theta_prev, orders)
    n = arx.n
    Q2 = build_Q(arx.eta, orders)[n:, :]
    model = BjModel.from_theta(theta_prev, orders.m_f, orders.m_l)
    t_bar = np.hstack(
        [-toeplitz_matrix(model.L, n, n), toeplitz_matrix(model.F, n, n)]
    )
    R = arx.R_reg if arx.R_reg is not None else arx.R
    X = cho_solve(cho_factor(R, lower=True), t_bar.T)
    S_w = t_bar @ X
    S_w = 0.5 * (S_w + S_w.T)
    Ls = cholesky(S_w, lower=True)
    A = solve_triangular(Ls, Q2, lower=True)
    b = solve_triangular(Ls, arx.b, lower=True)
    theta = _solve_ls(A, b)
    return _make_estimate(theta, arx, orders, iterations=1)


def _require_stable_weighting(theta: np.ndarray, orders: ModelOrders):
    model = BjModel.from_theta(theta, orders.m_f, orders.m_l,
                               orders.m_c, orders.m_d)
    if not (is_stable(model.F)[0] and is_stable(model.C)[0]):
        raise ValueError(
            "unstable weighting parameters; reflect the roots before step 3"
        )


def _make_estimate(theta, arx, orders, iterations) -> ThetaEstimate:
    model = BjModel.from_theta(theta, orders.m_f, orders.m_l,
                               orders.m_c, orders.m_d)
    stable_noise = is_stable(model.C)[0] and is_stable(model.D)[0]
    return ThetaEstimate(
        theta=theta, orders=orders, n_used=arx.n, iterations=iterations,
        pem_cost=math.nan, stable_noise_model=stable_noise,
    )


def reflect_unstable(theta: np.ndarray, orders: ModelOrders,
                     clamp: float = 0.999):
    """Reflect roots of F and C lying on/outside the unit circle to
    1/conj(root), clamped to the given magnitude.  Returns (theta, changed)."""
    model = BjModel.from_theta(theta, orders.m_f, orders.m_l,
                               orders.m_c, orders.m_d)
    changed = False

    def fix(poly: Polynomial) -> Polynomial:
        nonlocal changed
        roots = np.roots(poly.coeffs) if poly.degree else np.array([])
        if roots.size == 0 or np.all(np.abs(roots) < 1.0):
            return poly
        changed = True
        out = roots.copy()
        bad = np.abs(out) >= 1.0
        out[bad] = 1.0 / np.conj(out[bad])
        mags = np.abs(out)
        shrink = mags > clamp
        out[shrink] *= clamp / mags[shrink]
        return Polynomial(np.real(np.poly(out)))

    f_new = fix(model.F)
    c_new = fix(model.C)
    if not changed:
        return theta, False
    new = np.concatenate(
        [f_new.coeffs[1:], model.L.coeffs[1:], c_new.coeffs[1:],
         model.D.coeffs[1:]]
    )
    return new, True


def pem_cost(theta: np.ndarray, data: DataSet, orders: ModelOrders) -> float:
    """Quadratic prediction-error cost (1/N) sum eps_t^2 with zero initial
    conditions; +inf when the predictor (C or F) is unstable."""
    model = BjModel.from_theta(theta, orders.m_f, orders.m_l,
                               orders.m_c, orders.m_d)
    if not (is_stable(model.C)[0] and is_stable(model.F)[0]):
        return math.inf
    resid = data.y - filter_signal(model.G, data.u)
    eps = filter_signal(RationalFilter(model.D, model.C), resid)
    return float(np.mean(eps**2))


def wnsf_identify(data: DataSet, orders: ModelOrders,
                  options: WnsfOptions = WnsfOptions()) -> ThetaEstimate:
    """Full pipeline: for each n in the grid run steps 1-3, iterate step 3
    re-using the latest estimate in the weighting, and return the candidate
    with minimal prediction-error cost (smaller n, then fewer iterations, on
    ties).  Candidates whose weighting needed root reflection are kept out of
    the selection unless nothing else is available."""
    n_cap = (data.N - 1) // 2
    grid = [n for n in options.n_grid if n <= n_cap]
    step3 = step3_wls_oe if orders.is_oe else step3_wls

    candidates = []
    failures = {}
    for n in grid:
        try:
            arx = estimate_arx(data, n, delta_reg=options.delta_reg,
                               known_zero_ic=options.known_zero_ic)
            current = step2_ls(arx, orders)
        except (np.linalg.LinAlgError, ValueError) as exc:
            failures[n] = f"step 1/2 failed: {exc}"
            continue
        step2_theta = current.theta
        theta_prev = current.theta
        any_reflection = False
        for it in range(1, options.max_iter + 1):
            weight_theta, reflected = reflect_unstable(theta_prev, orders)
            any_reflection = any_reflection or reflected
            try:
                est = step3(arx, weight_theta, orders)
            except (np.linalg.LinAlgError, ValueError) as exc:
                failures.setdefault(n, f"step 3 failed at iter {it}: {exc}")
                break
            est.iterations = it
            est.step2_theta = step2_theta
            est.reflected = any_reflection
            est.pem_cost = pem_cost(est.theta, data, orders)
            candidates.append(est)
            rel_change = np.linalg.norm(est.theta - theta_prev) / (
                np.linalg.norm(theta_prev) + 1e-12
            )
            theta_prev = est.theta
            if rel_change < options.tol:
                break

    feasible = [c for c in candidates if math.isfinite(c.pem_cost)]
    selectable = [c for c in feasible if not c.reflected] or feasible
    if not selectable:
        raise IdentificationError(
            "no feasible WNSF candidate on the given n grid",
            diagnostics=failures,
        )
    best = min(selectable, key=lambda c: (c.pem_cost, c.n_used, c.iterations))
    best.trace = [
        {
            "n": c.n_used,
            "iter": c.iterations,
            "theta": c.theta.tolist(),
            "pem_cost": c.pem_cost,
            "reflected": c.reflected,
        }
        for c in candidates
    ]
    return best
