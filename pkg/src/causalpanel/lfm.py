"""Interactive fixed effects counterfactuals.

Control units identify a low-rank factor structure

    y_it = x_it' theta + c + kappa_i + mu_t + lambda_i' f_t + eps_it

(the additive pieces are optional). Estimation is alternating least
squares on the control block; with no covariates the solve is exact in a
single pass because, for fixed theta, the joint minimizer over additive
effects and a rank-J interaction is the truncated SVD of the within-
transformed matrix. Treated units never enter the factor estimation:
their loadings come from regressing pre-period outcomes on the estimated
factors, and the counterfactual extrapolates that regression through the
post period. Uncertainty comes from a parametric residual bootstrap.

Normalization: F F' / T = I_J and the control loading Gram matrix is
diagonal with decreasing entries; factor signs are fixed by making each
factor's largest-magnitude coordinate positive.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy import stats

from .effects import EffectEstimate
from .errors import (
    ConvergenceWarning,
    InsufficientReplicates,
    InvalidRank,
    InvalidStructure,
    SingularCovariance,
    SingularProjection,
)
from .panel import PanelDataset

ALS_TOL = 1e-8
ALS_MAX_ITER = 500


@dataclass(frozen=True)
class FactorFit:
    """Estimated factor structure, control side.

    factors has shape (J, T); control_loadings (n1, J). unit_effects and
    time_effects are None when the corresponding additive term is not in
    the model. treated_loadings / treated_unit_effects are filled in by
    project_treated_loadings and are None straight out of fit_controls.
    """

    panel: PanelDataset
    J: int
    fe: tuple
    factors: np.ndarray
    control_loadings: np.ndarray
    intercept: float
    unit_effects: np.ndarray | None
    time_effects: np.ndarray | None
    theta: np.ndarray
    objective: float
    objective_history: tuple
    iterations: int
    converged: bool
    treated_loadings: np.ndarray | None = None
    treated_unit_effects: np.ndarray | None = None


def _check_rank(panel: PanelDataset, J: int, fe: tuple) -> None:
    J_cap = min(panel.n1, panel.T) - 1
    if not 0 <= J <= J_cap:
        raise InvalidRank(f"J={J} outside [0, {J_cap}] for this panel")


def _within(M: np.ndarray, fe: tuple):
    """Subtract the requested additive structure; return (demeaned, parts)."""
    intercept, row, col = 0.0, None, None
    D = M
    if "unit" in fe and "time" in fe:
        intercept = float(M.mean())
        row = M.mean(axis=1) - intercept
        col = M.mean(axis=0) - intercept
        D = M - row[:, None] - col[None, :] - intercept
    elif "unit" in fe:
        row = M.mean(axis=1)
        D = M - row[:, None]
    elif "time" in fe:
        col = M.mean(axis=0)
        D = M - col[None, :]
    return D, intercept, row, col


def _svd_components(D: np.ndarray, J: int, T: int):
    """Rank-J factorization with the package normalization."""
    if J == 0:
        return np.zeros((0, T)), np.zeros((D.shape[0], 0)), np.zeros_like(D)
    U, s, Vt = np.linalg.svd(D, full_matrices=False)
    F = np.sqrt(T) * Vt[:J]
    lam = U[:, :J] * (s[:J] / np.sqrt(T))
    for j in range(J):
        k = int(np.argmax(np.abs(F[j])))
        if F[j, k] < 0:
            F[j] = -F[j]
            lam[:, j] = -lam[:, j]
    return F, lam, lam @ F


def fit_controls(panel: PanelDataset, J: int, fe: tuple = ("unit", "time")) -> FactorFit:
    """Estimate factors, loadings, additive effects, and covariate slopes
    from the control block only.

    With covariates the solve alternates between the covariate slopes and
    the (additive + low rank) structure; each step is an exact block
    minimizer so the objective is monotone. Without covariates one pass is
    the global minimum of the control-block least squares problem.
    """
    fe = tuple(fe)
    for part in fe:
        if part not in ("unit", "time"):
            raise InvalidStructure(f"unknown fixed-effect name {part!r}")
    _check_rank(panel, J, fe)
    Y = panel.control_outcomes
    n1, T = Y.shape
    K = len(panel.covariate_labels)
    X = panel.covariates[: panel.n1] if K else None

    theta = np.zeros(K)
    if K:
        D_y, *_ = _within(Y, fe)
        D_x = np.stack([_within(X[:, :, k], fe)[0] for k in range(K)], axis=2)
        Zx = D_x.reshape(-1, K)
        theta, *_ = np.linalg.lstsq(Zx, D_y.reshape(-1), rcond=1e-10)

    prev_obj = np.inf
    iterations, converged = 0, True
    history = []
    F = lam = low = None
    intercept, row, col = 0.0, None, None
    for it in range(1, ALS_MAX_ITER + 1):
        iterations = it
        M = Y - (X @ theta if K else 0.0)
        D, intercept, row, col = _within(M, fe)
        F, lam, low = _svd_components(D, J, T)
        resid = D - low
        obj = float(np.mean(resid * resid))
        history.append(obj)
        if not K or (
            np.isfinite(prev_obj)
            and prev_obj - obj <= ALS_TOL * max(1.0, abs(prev_obj))
        ):
            break
        prev_obj = obj
        structure = low + intercept
        if row is not None:
            structure = structure + row[:, None]
        if col is not None:
            structure = structure + col[None, :]
        target = (Y - structure).reshape(-1)
        theta, *_ = np.linalg.lstsq(X.reshape(-1, K), target, rcond=1e-10)
    else:
        converged = False
        warnings.warn(
            f"alternating least squares stopped at {ALS_MAX_ITER} iterations "
            "without meeting the objective tolerance",
            ConvergenceWarning,
        )

    return FactorFit(
        panel=panel,
        J=J,
        fe=fe,
        factors=F,
        control_loadings=lam,
        intercept=intercept,
        unit_effects=row,
        time_effects=col,
        theta=theta,
        objective=obj,
        objective_history=tuple(history),
        iterations=iterations,
        converged=converged,
    )


def _projection_target(fit: FactorFit, y_row: np.ndarray, x_row) -> np.ndarray:
    target = y_row.astype(float).copy()
    if x_row is not None and len(fit.theta):
        target -= x_row @ fit.theta
    target -= fit.intercept
    if fit.time_effects is not None:
        target -= fit.time_effects
    return target


def project_treated_loadings(fit: FactorFit, times: np.ndarray | None = None) -> FactorFit:
    """Regress each treated unit's pre-period path on the estimated factors.

    times optionally restricts which pre-period positions enter the
    regression (used by cross-validation); default all of them. The design
    is [1, f_t] when the model carries unit effects, else just f_t.
    Raises SingularProjection when that design is rank deficient.
    """
    panel = fit.panel
    if times is None:
        times = np.arange(panel.T1)
    times = np.asarray(times, dtype=int)
    ufe = fit.unit_effects is not None
    cols = []
    if ufe:
        cols.append(np.ones(len(times)))
    if fit.J:
        cols.append(fit.factors[:, times].T)
    design = np.column_stack(cols) if cols else np.zeros((len(times), 0))
    q = design.shape[1]
    lam_tr = np.zeros((panel.n2, fit.J))
    kap_tr = np.zeros(panel.n2)
    if q:
        rank = np.linalg.matrix_rank(design, tol=1e-10 * max(1.0, np.abs(design).max()))
        if rank < q:
            raise SingularProjection(
                f"loading design has rank {rank} with {q} columns"
            )
    for j in range(panel.n2):
        x_row = panel.covariates[panel.n1 + j] if panel.covariates is not None else None
        target = _projection_target(fit, panel.treated_outcomes[j], x_row)[times]
        if q == 0:
            continue
        coef, *_ = np.linalg.lstsq(design, target, rcond=1e-10)
        if ufe:
            kap_tr[j] = coef[0]
            lam_tr[j] = coef[1:]
        else:
            lam_tr[j] = coef
    return replace(fit, treated_loadings=lam_tr, treated_unit_effects=kap_tr)


def counterfactual_paths(fit: FactorFit) -> np.ndarray:
    """(n2, T) model path for the treated units over the whole sample."""
    if fit.treated_loadings is None:
        raise SingularProjection("treated loadings have not been projected")
    panel = fit.panel
    path = np.full((panel.n2, panel.T), fit.intercept)
    if fit.time_effects is not None:
        path += fit.time_effects[None, :]
    if fit.unit_effects is not None:
        path += fit.treated_unit_effects[:, None]
    if fit.J:
        path += fit.treated_loadings @ fit.factors
    if panel.covariates is not None and len(fit.theta):
        path += panel.covariates[panel.n1 :] @ fit.theta
    return path


def pooled_sigma2(fit: FactorFit) -> float:
    """Residual variance pooled over the control block and treated pre-period.

    Maximum-likelihood style normalization (divide by the cell count), used
    to calibrate the parametric bootstrap.
    """
    panel = fit.panel
    Y = panel.control_outcomes
    K = len(panel.covariate_labels)
    model_c = np.full(Y.shape, fit.intercept)
    if fit.unit_effects is not None:
        model_c += fit.unit_effects[:, None]
    if fit.time_effects is not None:
        model_c += fit.time_effects[None, :]
    if fit.J:
        model_c += fit.control_loadings @ fit.factors
    if K:
        model_c += panel.covariates[: panel.n1] @ fit.theta
    rss = float(np.sum((Y - model_c) ** 2))
    path = counterfactual_paths(fit)
    pre_res = panel.treated_outcomes[:, : panel.T1] - path[:, : panel.T1]
    rss += float(np.sum(pre_res * pre_res))
    return rss / (panel.n1 * panel.T + panel.n2 * panel.T1)


def select_num_factors_cv(
    panel: PanelDataset, J_max: int | None = None, fe: tuple = ("unit", "time")
):
    """Pick J by leave-one-out over treated pre-period time points.

    Factors come from the controls alone, so holding out a treated time
    point only changes the loading projection; the factor fit per J is
    reused across folds. Returns (J, mse_by_J dict). Ties go to the
    smaller J.
    """
    fe = tuple(fe)
    ufe = 1 if "unit" in fe else 0
    tfe = 1 if "time" in fe else 0
    cap = min(panel.n1 - ufe, panel.T - tfe, panel.T1 - 1 - ufe)
    if J_max is None:
        J_max = cap
    if not 0 <= J_max <= cap:
        raise InvalidRank(f"J_max={J_max} outside [0, {cap}]")
    mse = {}
    all_pre = np.arange(panel.T1)
    for J in range(J_max + 1):
        fit = fit_controls(panel, J, fe)
        total, count = 0.0, 0
        for s in range(panel.T1):
            sub = project_treated_loadings(fit, all_pre[all_pre != s])
            path = counterfactual_paths(sub)
            for j in range(panel.n2):
                err = panel.treated_outcomes[j, s] - path[j, s]
                total += err * err
                count += 1
        mse[J] = total / count
    best = min(mse, key=lambda J: (mse[J], J))
    return best, mse


class BootstrapResult(NamedTuple):
    draws: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float


def parametric_bootstrap(
    panel: PanelDataset,
    J: int,
    fe: tuple = ("unit", "time"),
    B: int = 500,
    level: float = 0.95,
    seed: int = 0,
) -> BootstrapResult:
    """Gaussian residual bootstrap for the post-period effects.

    Pseudo-panels are the fitted surface (with the estimated effects added
    back to the treated post block) plus iid N(0, sigma2) noise, sigma2
    pooled as in pooled_sigma2. Each pseudo-panel is refit from scratch at
    the same J; the interval is the empirical (alpha/2, 1 - alpha/2) band
    of the replicated effects. With sigma2 = 0 every draw repeats the point
    estimate and the band has zero width.

    Requires enough replicates for the tail quantiles to exist:
    B >= max(2, ceil(2 / (1 - level))).
    """
    needed = max(2, int(np.ceil(2.0 / (1.0 - level))))
    if B < needed:
        raise InsufficientReplicates(
            f"B={B} replicates cannot resolve a {level:.0%} interval; need {needed}"
        )
    fit = project_treated_loadings(fit_controls(panel, J, fe))
    path = counterfactual_paths(fit)
    tau = panel.treated_outcomes[:, panel.T1 :] - path[:, panel.T1 :]
    sigma = np.sqrt(pooled_sigma2(fit))

    Yc_model = np.full((panel.n1, panel.T), fit.intercept)
    if fit.unit_effects is not None:
        Yc_model += fit.unit_effects[:, None]
    if fit.time_effects is not None:
        Yc_model += fit.time_effects[None, :]
    if fit.J:
        Yc_model += fit.control_loadings @ fit.factors
    if panel.covariates is not None and len(fit.theta):
        Yc_model += panel.covariates[: panel.n1] @ fit.theta
    surface = np.vstack([Yc_model, path])
    surface[panel.n1 :, panel.T1 :] += tau

    draws = np.empty((B, panel.n2, panel.T2))
    children = np.random.SeedSequence(seed).spawn(B)
    for b in range(B):
        rng = np.random.default_rng(children[b])
        pseudo = panel.replace_outcomes(surface + rng.normal(0.0, sigma, surface.shape))
        refit = project_treated_loadings(fit_controls(pseudo, J, fe))
        repath = counterfactual_paths(refit)
        draws[b] = pseudo.treated_outcomes[:, panel.T1 :] - repath[:, panel.T1 :]
    alpha = 1.0 - level
    lower = np.quantile(draws, alpha / 2, axis=0)
    upper = np.quantile(draws, 1.0 - alpha / 2, axis=0)
    return BootstrapResult(draws, lower, upper, level)


def estimate_effects_xu(
    panel: PanelDataset,
    J: int | str = "auto",
    fe: tuple = ("unit", "time"),
    bootstrap: int = 0,
    level: float = 0.95,
    seed: int = 0,
) -> EffectEstimate:
    """Full pipeline: choose J (optionally), fit, project, extrapolate.

    bootstrap > 0 attaches interval bounds from that many parametric
    replications.
    """
    cv_mse = None
    if J == "auto":
        J, cv_mse = select_num_factors_cv(panel, fe=fe)
    fit = project_treated_loadings(fit_controls(panel, int(J), fe))
    path = counterfactual_paths(fit)
    y_post = panel.treated_outcomes[:, panel.T1 :]
    lower = upper = None
    if bootstrap:
        boot = parametric_bootstrap(panel, int(J), fe, bootstrap, level, seed)
        tau = y_post - path[:, panel.T1 :]
        lower, upper = boot.lower, boot.upper
        # guard against quantile noise flipping the band around the point
        lower = np.minimum(lower, tau)
        upper = np.maximum(upper, tau)
    details = {
        "J": int(J),
        "fe": fit.fe,
        "converged": fit.converged,
        "iterations": fit.iterations,
        "sigma2": pooled_sigma2(fit),
    }
    if cv_mse is not None:
        details["cv_mse"] = {str(k): v for k, v in cv_mse.items()}
    return EffectEstimate(
        method="lfm",
        units=panel.treated_labels,
        times=panel.post_times,
        y=y_post,
        y0_hat=path[:, panel.T1 :],
        lower=lower,
        upper=upper,
        level=level if bootstrap else None,
        fitted=path,
        fitted_times=panel.time_labels,
        details=details,
    )


class OutlierCheck(NamedTuple):
    distance_sq: np.ndarray
    threshold: float
    flagged: np.ndarray


def loading_outlier_check(fit: FactorFit) -> OutlierCheck:
    """Mahalanobis screen of treated loadings against the control cloud.

    Squared distances compare to the 0.99 quantile of chi-square(J); a
    treated unit beyond it sits outside the loading distribution spanned
    by the controls, and the factor extrapolation is suspect. Requires at
    least one free factor and a nonsingular control loading covariance.
    """
    if fit.J < 1:
        raise InvalidRank("outlier check needs at least one free factor")
    if fit.treated_loadings is None:
        raise SingularProjection("treated loadings have not been projected")
    lam_c = fit.control_loadings
    if lam_c.shape[0] < fit.J + 2:
        raise SingularCovariance(
            "too few control units to estimate the loading covariance"
        )
    mean = lam_c.mean(axis=0)
    S = np.cov(lam_c, rowvar=False, ddof=1).reshape(fit.J, fit.J)
    sign, logdet = np.linalg.slogdet(S)
    if sign <= 0 or not np.isfinite(logdet):
        raise SingularCovariance("control loading covariance is singular")
    try:
        Sinv = np.linalg.inv(S)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(str(exc)) from exc
    diff = fit.treated_loadings - mean
    d2 = np.einsum("ij,jk,ik->i", diff, Sinv, diff)
    threshold = float(stats.chi2.ppf(0.99, df=fit.J))
    return OutlierCheck(d2, threshold, d2 > threshold)
