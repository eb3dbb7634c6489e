"""Two-way fixed effects difference in differences.

The model is a saturated interaction regression: unit effects, time
effects, optional covariates, and one free coefficient per treated
(unit, post-period) cell. Reference coding drops the first unit's and
first period's dummies. Because the treated post block is saturated, its
cells have zero residual and the tau coefficients are exactly the
observed outcome minus the two-way-fit counterfactual.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import stats

from .effects import EffectEstimate
from .errors import InsufficientData, InvalidCell
from .linalg import ols
from .panel import PanelDataset


@dataclass(frozen=True)
class DidFit:
    """Fitted two-way model plus per-cell effects.

    tau and tau_var have shape (n2, T2). unit_effects and time_effects are
    reported with the reference levels resolved to zero (unit 0, time 0).
    """

    panel: PanelDataset
    intercept: float
    unit_effects: np.ndarray
    time_effects: np.ndarray
    theta: np.ndarray
    tau: np.ndarray
    tau_var: np.ndarray
    sigma2: float
    dof: int
    residuals: np.ndarray


class WaldTest(NamedTuple):
    statistic: float
    p_value: float


class TrendCheck(NamedTuple):
    times: tuple
    gap: np.ndarray
    slope: float
    slope_se: float
    p_value: float


def did_two_by_two(y_a: float, y_b: float, y_c: float, y_d: float) -> float:
    """Classic four-cell difference in differences.

    y_a, y_b are the control unit's pre and post outcomes; y_c, y_d the
    treated unit's. Returns (y_d - y_c) - (y_b - y_a): the treated change
    net of the control change.
    """
    return (y_d - y_c) - (y_b - y_a)


def _design(panel: PanelDataset, use_covariates: bool = True):
    n, T = panel.n, panel.T
    K = len(panel.covariate_labels) if use_covariates else 0
    n2, T2 = panel.n2, panel.T2
    N = n * T
    p = 1 + (n - 1) + (T - 1) + K + n2 * T2
    if p > N:
        raise InsufficientData(
            f"{p} coefficients but only {N} observations"
        )
    X = np.zeros((N, p))
    rows = np.arange(N)
    i_idx = rows // T
    t_idx = rows % T
    X[:, 0] = 1.0
    for i in range(1, n):
        X[i_idx == i, i] = 1.0
    off = n
    for t in range(1, T):
        X[t_idx == t, off + t - 1] = 1.0
    off += T - 1
    if K:
        X[:, off : off + K] = panel.covariates.reshape(N, K)
        off += K
    # one dummy per treated post cell, unit-major
    for j in range(n2):
        for s in range(T2):
            col = off + j * T2 + s
            X[(i_idx == panel.n1 + j) & (t_idx == panel.T1 + s), col] = 1.0
    y = panel.outcomes.reshape(N)
    return X, y, off


def fit_did(panel: PanelDataset, use_covariates: bool = True) -> DidFit:
    """Fit the saturated two-way model by least squares.

    Covariates ride along as regressors unless use_covariates is False.
    Raises SingularDesign if the design (after reference coding) is rank
    deficient, e.g. a covariate collinear with the fixed effects, and
    InsufficientData when there are more coefficients than cells.
    """
    n, T = panel.n, panel.T
    K = len(panel.covariate_labels) if use_covariates else 0
    n2, T2 = panel.n2, panel.T2
    X, y, tau_off = _design(panel, use_covariates)
    fit = ols(X, y)
    N, p = X.shape
    dof = N - p
    sigma2 = fit.rss / dof if dof > 0 else 0.0

    beta = fit.beta
    unit_effects = np.concatenate([[0.0], beta[1:n]])
    time_effects = np.concatenate([[0.0], beta[n : n + T - 1]])
    theta = beta[n + T - 1 : n + T - 1 + K]
    tau = beta[tau_off:].reshape(n2, T2)

    XtX_inv = np.linalg.inv(X.T @ X)
    tau_var = sigma2 * np.diag(XtX_inv)[tau_off:].reshape(n2, T2)

    return DidFit(
        panel=panel,
        intercept=float(beta[0]),
        unit_effects=unit_effects,
        time_effects=time_effects,
        theta=theta,
        tau=tau,
        tau_var=tau_var,
        sigma2=float(sigma2),
        dof=dof,
        residuals=fit.residuals.reshape(n, T),
    )


def estimate_effects(fit: DidFit, level: float = 0.95) -> EffectEstimate:
    """Package the treated-post effects with normal-approximation intervals."""
    panel = fit.panel
    y_post = panel.treated_outcomes[:, panel.T1 :]
    se = np.sqrt(np.maximum(fit.tau_var, 0.0))
    z = stats.norm.ppf(0.5 + level / 2)
    fitted = _counterfactual_path(fit)
    return EffectEstimate(
        method="did",
        units=panel.treated_labels,
        times=panel.post_times,
        y=y_post,
        y0_hat=y_post - fit.tau,
        lower=fit.tau - z * se,
        upper=fit.tau + z * se,
        level=level,
        fitted=fitted,
        fitted_times=panel.time_labels,
        details={"sigma2": fit.sigma2, "dof": fit.dof},
    )


def _counterfactual_path(fit: DidFit) -> np.ndarray:
    """Model path intercept + unit + time (+ covariates) for treated units, all T."""
    panel = fit.panel
    path = (
        fit.intercept
        + fit.unit_effects[panel.n1 :, None]
        + fit.time_effects[None, :]
    )
    if len(fit.theta):
        path = path + panel.covariates[panel.n1 :] @ fit.theta
    return path


def wald_test(fit: DidFit, unit: int, time: int) -> WaldTest:
    """Wald test of tau(unit, time) = 0 against chi-square(1).

    unit and time are 0-based panel coordinates and must address a treated
    post-period cell; anything else raises InvalidCell. A zero-variance fit
    yields statistic +inf (p = 0) unless the effect is itself zero at the
    data scale, in which case the statistic is 0 and p = 1.
    """
    panel = fit.panel
    if not panel.is_treated_cell(unit, time):
        raise InvalidCell(
            f"cell (unit={unit}, time={time}) is not in the treated post block"
        )
    j, s = unit - panel.n1, time - panel.T1
    t = fit.tau[j, s]
    v = fit.tau_var[j, s]
    if v <= 0:
        # an exact fit: the effect is either numerically zero or certain
        if abs(t) <= 1e-9 * max(1.0, float(np.max(np.abs(panel.outcomes)))):
            return WaldTest(0.0, 1.0)
        return WaldTest(float("inf"), 0.0)
    stat = t * t / v
    return WaldTest(float(stat), float(stats.chi2.sf(stat, df=1)))


def parallel_trends_series(panel: PanelDataset) -> TrendCheck:
    """Pre-period gap between treated and control means, with a trend test.

    The gap series is mean(treated) - mean(controls) for each t <= T1. The
    slope comes from an OLS of the gap on time position; a two-sided
    p-value from the t distribution with T1 - 2 degrees of freedom. Under
    parallel trends the slope should be indistinguishable from zero.
    """
    gap = panel.treated_outcomes[:, : panel.T1].mean(axis=0) - panel.control_outcomes[
        :, : panel.T1
    ].mean(axis=0)
    T1 = panel.T1
    if T1 < 2:
        return TrendCheck(panel.pre_times, gap, float("nan"), float("nan"), float("nan"))
    t = np.arange(T1, dtype=float)
    t_c = t - t.mean()
    sxx = float(t_c @ t_c)
    slope = float(t_c @ gap) / sxx
    resid = gap - gap.mean() - slope * t_c
    if T1 > 2:
        s2 = float(resid @ resid) / (T1 - 2)
        se = np.sqrt(s2 / sxx)
        if se == 0:
            p = 1.0 if slope == 0 else 0.0
        else:
            p = 2 * float(stats.t.sf(abs(slope) / se, df=T1 - 2))
    else:
        se, p = float("nan"), float("nan")
    return TrendCheck(panel.pre_times, gap, slope, float(se), float(p))
