"""Synthetic control: convex donor weighting with feature importance.

The counterfactual for a treated unit is a convex combination of control
units. Weights solve

    min_w (z1 - Z0 w)' V (z1 - Z0 w)   s.t.  w >= 0, sum(w) = 1

where z1/Z0 stack pre-period features (outcome path, or summary means)
and V is a diagonal feature-importance matrix. V itself can be chosen by
a nested search that scores candidate diagonals by the pre-period MSE of
the resulting weights.

The quadratic program is solved by a purpose-built active-set method, not
a generic optimizer, so termination is finite and the KKT conditions are
verified explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import minimize

from .effects import EffectEstimate
from .errors import (
    DegenerateWeights,
    EstimationError,
    InsufficientData,
    InvalidFeatures,
    InvalidStructure,
)
from .panel import PanelDataset, pseudo_treated, treated_average

KKT_TOL = 1e-8


class SimplexSolution(NamedTuple):
    w: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int


def simplex_lsq(A: np.ndarray, b: np.ndarray, tol: float = 1e-10) -> SimplexSolution:
    """Minimize ||A w - b||^2 over the probability simplex.

    Active-set method: start from the uniform weight vector, repeatedly
    solve the equality-constrained problem on the currently free
    coordinates, take the longest feasible step when the solution leaves
    the nonnegative orthant (clamping the blocking coordinate), and free
    the coordinate with the most negative reduced gradient when the
    stationarity check fails. Duplicate donor columns make the Hessian
    singular; the minimum-norm KKT solve keeps the iteration well defined
    and deterministic.

    The reported kkt_residual is relative: gradient-based terms are
    divided by max(1, ||grad||_inf) so the certificate is scale free.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m = A.shape[1]
    if m == 0:
        raise InsufficientData("no donor units")
    G = A.T @ A
    c = A.T @ b
    if m == 1:
        w = np.array([1.0])
        r = A[:, 0] - b
        return SimplexSolution(w, float(r @ r), 0.0, 0)

    w = np.full(m, 1.0 / m)
    active = np.zeros(m, dtype=bool)
    max_iter = 3 * m * m + 50

    def kkt_solve(free_idx):
        k = len(free_idx)
        K = np.zeros((k + 1, k + 1))
        K[:k, :k] = 2.0 * G[np.ix_(free_idx, free_idx)]
        K[:k, k] = 1.0
        K[k, :k] = 1.0
        rhs = np.concatenate([2.0 * c[free_idx], [1.0]])
        sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
        return sol[:k], sol[k]

    it = 0
    while True:
        it += 1
        if it > max_iter:
            raise EstimationError("active-set iteration limit exceeded")
        free_idx = np.flatnonzero(~active)
        w_free, nu = kkt_solve(free_idx)

        if np.all(w_free >= -tol):
            w_new = np.zeros(m)
            w_new[free_idx] = np.clip(w_free, 0.0, None)
            s = w_new.sum()
            if s > 0:
                w_new /= s
            w = w_new
            grad = 2.0 * (G @ w - c)
            scale = max(1.0, float(np.max(np.abs(grad))))
            # multipliers on the clamped coordinates must be nonnegative;
            # the equality multiplier is re-estimated from the final weights
            nu = float(grad[free_idx].mean()) if free_idx.size else float(nu)
            mu = grad - nu
            active_idx = np.flatnonzero(active)
            if active_idx.size == 0 or np.all(mu[active_idx] >= -tol * scale):
                stat = 0.0
                if free_idx.size:
                    stat = float(np.max(np.abs(mu[free_idx]))) / scale
                dual = 0.0
                if active_idx.size:
                    dual = max(0.0, float(-np.min(mu[active_idx]))) / scale
                primal = abs(float(w.sum()) - 1.0)
                return SimplexSolution(
                    w,
                    float(np.sum((A @ w - b) ** 2)),
                    max(stat, dual, primal),
                    it,
                )
            worst = active_idx[np.argmin(mu[active_idx])]
            active[worst] = False
            continue

        # partial step to the nearest bound
        direction = np.zeros(m)
        direction[free_idx] = w_free
        delta = direction - w
        blocking = free_idx[w_free < -tol]
        with np.errstate(divide="ignore", invalid="ignore"):
            steps = w[blocking] / (w[blocking] - direction[blocking])
        alpha = float(np.min(steps))
        hit = blocking[steps <= alpha + 1e-15]
        w = np.clip(w + alpha * delta, 0.0, None)
        w[hit] = 0.0
        active[hit] = True
        s = w.sum()
        if s > 0:
            w /= s


@dataclass(frozen=True)
class ScmWeights:
    """Donor weights for one treated unit."""

    panel: PanelDataset
    treated: int
    w: np.ndarray
    v: np.ndarray
    features: object
    feature_names: tuple
    objective: float
    kkt_residual: float
    nonunique: bool
    v_improved: bool | None = None

    @property
    def treated_label(self):
        return self.panel.treated_labels[self.treated]


def feature_matrix(panel: PanelDataset, treated: int = 0, features="full"):
    """Build (z1, Z0, names) for the weight problem.

    features is "full" (every pre-period outcome), "means" (pre-period
    outcome mean plus each covariate's pre-period mean), or an explicit
    list of pre-period time labels selecting outcome rows.
    """
    if not 0 <= treated < panel.n2:
        raise InvalidStructure(f"treated index {treated} out of range")
    c_pre = panel.control_outcomes[:, : panel.T1]
    w_pre = panel.treated_outcomes[treated, : panel.T1]
    if isinstance(features, str) and features == "full":
        return w_pre.copy(), c_pre.T.copy(), tuple(panel.pre_times)
    if isinstance(features, str) and features == "means":
        z1 = [w_pre.mean()]
        Z0 = [c_pre.mean(axis=1)]
        names = ["outcome_mean"]
        if panel.covariates is not None:
            for k, lab in enumerate(panel.covariate_labels):
                z1.append(panel.covariates[panel.n1 + treated, : panel.T1, k].mean())
                Z0.append(panel.covariates[: panel.n1, : panel.T1, k].mean(axis=1))
                names.append(f"{lab}_mean")
        return np.array(z1), np.vstack(Z0), tuple(names)
    if isinstance(features, str):
        raise InvalidStructure(f"unknown feature specification {features!r}")
    pre_index = {lab: k for k, lab in enumerate(panel.pre_times)}
    rows = []
    for lab in features:
        if lab not in pre_index:
            raise InvalidStructure(f"feature time {lab!r} is not a pre-period label")
        rows.append(pre_index[lab])
    if not rows:
        raise InvalidStructure("feature list is empty")
    return (
        w_pre[rows].copy(),
        c_pre[:, rows].T.copy(),
        tuple(panel.pre_times[r] for r in rows),
    )


def fit_weights(
    panel: PanelDataset,
    treated: int = 0,
    features="full",
    v: np.ndarray | None = None,
) -> ScmWeights:
    """Solve the weight problem for one treated unit under a fixed V.

    v defaults to uniform. Duplicate donor feature columns are flagged via
    nonunique (the weight split between identical donors is arbitrary; the
    counterfactual is not affected when their outcome paths also agree).
    """
    z1, Z0, names = feature_matrix(panel, treated, features)
    if not (np.all(np.isfinite(z1)) and np.all(np.isfinite(Z0))):
        raise InvalidFeatures("feature matrix contains non-finite entries")
    p = len(z1)
    if v is None:
        v = np.full(p, 1.0 / p)
    v = np.asarray(v, dtype=float)
    if v.shape != (p,) or np.any(v < 0) or v.sum() <= 0:
        raise InvalidStructure("v must be a nonnegative vector matching the features")
    v = v / v.sum()
    sq = np.sqrt(v)
    sol = simplex_lsq(sq[:, None] * Z0, sq * z1)

    nonunique = False
    scale = max(1.0, float(np.max(np.abs(Z0))))
    for i in range(Z0.shape[1]):
        for j in range(i + 1, Z0.shape[1]):
            if np.max(np.abs(Z0[:, i] - Z0[:, j])) <= 1e-12 * scale:
                nonunique = True
                break
        if nonunique:
            break

    return ScmWeights(
        panel=panel,
        treated=treated,
        w=sol.w,
        v=v,
        features=features,
        feature_names=names,
        objective=sol.objective,
        kkt_residual=sol.kkt_residual,
        nonunique=nonunique,
    )


def _pre_mse(panel: PanelDataset, treated: int, w: np.ndarray) -> float:
    synth = w @ panel.control_outcomes[:, : panel.T1]
    err = panel.treated_outcomes[treated, : panel.T1] - synth
    return float(err @ err) / panel.T1


def optimize_v(
    panel: PanelDataset,
    treated: int = 0,
    features="full",
    restarts: int = 5,
    seed: int = 0,
    maxiter: int | None = None,
) -> tuple:
    """Choose the feature-importance diagonal by nested optimization.

    The outer criterion is the pre-period outcome MSE of the weights
    induced by V. Search runs over log-diagonal entries (softmax
    normalized) with Nelder-Mead from the uniform start plus random
    restarts. Returns (v, weights). When no candidate beats uniform V the
    uniform fit is returned with v_improved=False; this is the expected
    outcome whenever the features are the full pre-period outcome path,
    because the uniform weights already minimize the outer criterion by
    construction.
    """
    z1, Z0, _ = feature_matrix(panel, treated, features)
    p = len(z1)
    base = fit_weights(panel, treated, features, None)
    base_mse = _pre_mse(panel, treated, base.w)

    def outer(x):
        e = np.exp(x - np.max(x))
        v = e / e.sum()
        sq = np.sqrt(v)
        sol = simplex_lsq(sq[:, None] * Z0, sq * z1)
        return _pre_mse(panel, treated, sol.w)

    rng = np.random.default_rng(seed)
    best_x, best_val = None, base_mse
    if maxiter is None:
        maxiter = 200 * p
    for r in range(restarts):
        x0 = np.zeros(p) if r == 0 else rng.normal(0.0, 0.5, size=p)
        res = minimize(
            outer,
            x0,
            method="Nelder-Mead",
            options={"maxiter": maxiter, "xatol": 1e-6, "fatol": 1e-10},
        )
        if res.fun < best_val - 1e-12 * max(1.0, base_mse):
            best_x, best_val = res.x, res.fun

    if best_x is None:
        fit = replace(base, v_improved=False)
        return fit.v, fit
    e = np.exp(best_x - np.max(best_x))
    v = e / e.sum()
    fit = replace(fit_weights(panel, treated, features, v), v_improved=True)
    return fit.v, fit


def predict_counterfactual(weights: ScmWeights) -> EffectEstimate:
    """Counterfactual path w'Y_control for the fitted treated unit."""
    fit = weights
    panel = fit.panel
    path = fit.w @ panel.control_outcomes
    j = fit.treated
    y_post = panel.treated_outcomes[j, panel.T1 :]
    return EffectEstimate(
        method="scm",
        units=(panel.treated_labels[j],),
        times=panel.post_times,
        y=y_post[None, :],
        y0_hat=path[None, panel.T1 :],
        fitted=path[None, :],
        fitted_times=panel.time_labels,
        details={
            "w": fit.w,
            "v": fit.v,
            "donors": panel.control_labels,
            "kkt_residual": fit.kkt_residual,
            "nonunique": fit.nonunique,
            "v_improved": fit.v_improved,
        },
    )


def kreif_average(panel: PanelDataset, features="full", v=None) -> EffectEstimate:
    """Average the treated units first, then fit one synthetic control."""
    collapsed = treated_average(panel)
    fit = fit_weights(collapsed, 0, features, v)
    est = predict_counterfactual(fit)
    return EffectEstimate(
        method="scm_avg",
        units=est.units,
        times=est.times,
        y=est.y,
        y0_hat=est.y0_hat,
        fitted=est.fitted,
        fitted_times=est.fitted_times,
        details=est.details,
    )


def acemoglu_pooled_effect(panel: PanelDataset, features="full", v=None) -> EffectEstimate:
    """Fit each treated unit separately, pool effects by inverse pre-period RMS error.

    Unit weights are 1/q_j with q_j the root mean squared pre-period error
    of unit j's own synthetic control. A unit with an exact pre-period fit
    (q_j = 0, judged at float tolerance relative to the data scale)
    receives all the weight, the documented limiting behavior; several
    exact fits are accepted only when their effect paths agree, otherwise
    DegenerateWeights is raised.
    """
    fits = [fit_weights(panel, j, features, v) for j in range(panel.n2)]
    taus, qs, ys, y0s = [], [], [], []
    for j, fit in enumerate(fits):
        path = fit.w @ panel.control_outcomes
        y_post = panel.treated_outcomes[j, panel.T1 :]
        taus.append(y_post - path[panel.T1 :])
        ys.append(y_post)
        y0s.append(path[panel.T1 :])
        qs.append(np.sqrt(_pre_mse(panel, j, fit.w)))
    qs = np.array(qs)
    scale = max(1.0, float(np.sqrt(np.mean(panel.treated_outcomes[:, : panel.T1] ** 2))))
    zero = qs <= 1e-12 * scale
    if zero.any():
        idx = np.flatnonzero(zero)
        ref = taus[idx[0]]
        for k in idx[1:]:
            if not np.allclose(taus[k], ref, rtol=0, atol=1e-9 * scale):
                raise DegenerateWeights(
                    "multiple exact pre-period fits with conflicting effects"
                )
        omega = zero.astype(float) / zero.sum()
    else:
        inv = 1.0 / qs
        omega = inv / inv.sum()
    y = omega @ np.vstack(ys)
    y0 = omega @ np.vstack(y0s)
    label = "pooled(" + ",".join(str(u) for u in panel.treated_labels) + ")"
    return EffectEstimate(
        method="scm_pooled",
        units=(label,),
        times=panel.post_times,
        y=y[None, :],
        y0_hat=y0[None, :],
        details={"unit_weights": omega, "pre_rmse": qs},
    )


def select_feature_set(panel: PanelDataset, candidates: Sequence) -> tuple:
    """Pick the feature set whose control placebos predict best.

    Each candidate is scored by refitting the synthetic control with every
    control unit cast as pseudo-treated (donors are the remaining controls,
    the genuine treated units are left out entirely) and averaging the
    post-period MSE of those placebo counterfactuals. Returns
    (best_index, best_candidate, scores). Ties go to the earlier candidate.
    """
    if len(candidates) == 0:
        raise InvalidStructure("no candidate feature sets")
    if panel.n1 < 2:
        raise InsufficientData("placebo scoring needs at least two controls")
    scores = []
    for cand in candidates:
        total = 0.0
        for j in range(panel.n1):
            pp = pseudo_treated(panel, j)
            fit = fit_weights(pp, 0, cand, None)
            path = fit.w @ pp.control_outcomes
            err = pp.treated_outcomes[0, pp.T1 :] - path[pp.T1 :]
            total += float(err @ err) / pp.T2
        scores.append(total / panel.n1)
    best = int(np.argmin(scores))
    return best, candidates[best], np.array(scores)


class HullCheck(NamedTuple):
    inside: bool
    violations: tuple
    range_low: np.ndarray
    range_high: np.ndarray


def convex_hull_check(panel: PanelDataset, treated: int = 0) -> HullCheck:
    """Per-period interpolation screen for one treated unit.

    A convex combination of donors can only reach values inside
    [min, max] of the donors at each time point. Reports every
    pre-period time where the treated outcome falls outside that range.
    """
    lo = panel.control_outcomes[:, : panel.T1].min(axis=0)
    hi = panel.control_outcomes[:, : panel.T1].max(axis=0)
    y1 = panel.treated_outcomes[treated, : panel.T1]
    bad = (y1 < lo) | (y1 > hi)
    violations = tuple(panel.pre_times[t] for t in np.flatnonzero(bad))
    return HullCheck(not bad.any(), violations, lo, hi)
