"""Counterfactuals from regressing the treated unit on control outcomes.

Two flavors of the same idea. The plain variant fits the treated unit's
pre-period path on an intercept plus a chosen subset of control series by
least squares. The penalized variant keeps every control and shrinks with
a combined ridge/lasso penalty

    SSE + rho * ((1 - delta)/2 * sum(beta^2) + phi * sum(|beta|))

minimized by coordinate descent with soft thresholding; the intercept is
never penalized. Subset selection for the plain variant enumerates
subsets exhaustively (best fit per size, then an AIC comparison across
sizes).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats

from .effects import EffectEstimate
from .errors import (
    InsufficientData,
    SingularDesign,
    TooManySubsets,
    Underdetermined,
)
from .linalg import ols
from .panel import PanelDataset

CD_TOL = 1e-9
CD_MAX_ITER = 200_000
SUBSET_BUDGET = 1_000_000


@dataclass(frozen=True)
class LinearCombFit:
    """Intercept + control-series coefficients for one treated unit.

    beta always has length n1; controls outside the fitted subset carry
    an exact zero. rho/delta/phi are None for the unpenalized variant.
    """

    panel: PanelDataset
    treated: int
    intercept: float
    beta: np.ndarray
    controls: tuple
    variant: str
    sigma2: float
    r2: float
    rho: float | None = None
    delta: float | None = None
    phi: float | None = None
    iterations: int | None = None

    @property
    def treated_label(self):
        return self.panel.treated_labels[self.treated]


def fit_hcw(
    panel: PanelDataset, treated: int = 0, controls: Sequence[int] | None = None
) -> LinearCombFit:
    """Least squares of the treated pre-period path on control series.

    controls is a sequence of 0-based control indices; default all. The
    design must be full rank (SingularDesign otherwise) and identifiable,
    which requires len(controls) < T1 (Underdetermined otherwise). With
    len(controls) + 1 == T1 the fit interpolates exactly and the residual
    variance is reported as nan.
    """
    if controls is None:
        controls = tuple(range(panel.n1))
    controls = tuple(int(j) for j in controls)
    if any(not 0 <= j < panel.n1 for j in controls):
        raise InsufficientData("control index out of range")
    ell = len(controls)
    if ell >= panel.T1:
        raise Underdetermined(
            f"{ell} controls plus intercept against {panel.T1} pre-periods"
        )
    y = panel.treated_outcomes[treated, : panel.T1]
    C = panel.control_outcomes[np.array(controls), : panel.T1].T
    X = np.column_stack([np.ones(panel.T1), C])
    fit = ols(X, y)
    beta = np.zeros(panel.n1)
    beta[list(controls)] = fit.beta[1:]
    dof = panel.T1 - ell - 1
    sigma2 = fit.rss / dof if dof > 0 else float("nan")
    tss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - fit.rss / tss if tss > 0 else 1.0
    return LinearCombFit(
        panel=panel,
        treated=treated,
        intercept=float(fit.beta[0]),
        beta=beta,
        controls=controls,
        variant="hcw",
        sigma2=float(sigma2),
        r2=float(r2),
    )


def _coordinate_descent(y, C, rho, delta, phi, b0, beta):
    """Cyclic coordinate descent on the penalized least squares objective."""
    T1, m = C.shape
    col_ss = np.einsum("ti,ti->i", C, C)
    l2 = rho * (1.0 - delta)
    l1 = rho * phi
    r = y - b0 - C @ beta
    for it in range(1, CD_MAX_ITER + 1):
        max_change = 0.0
        new_b0 = b0 + r.mean()
        r -= new_b0 - b0
        max_change = abs(new_b0 - b0)
        b0 = new_b0
        for i in range(m):
            old = beta[i]
            z = 2.0 * (C[:, i] @ r) + 2.0 * col_ss[i] * old
            num = math.copysign(max(abs(z) - l1, 0.0), z)
            new = num / (2.0 * col_ss[i] + l2) if (col_ss[i] > 0 or l2 > 0) else 0.0
            if new != old:
                r -= (new - old) * C[:, i]
                change = abs(new - old)
                if change > max_change:
                    max_change = change
                beta[i] = new
        if max_change < CD_TOL:
            return b0, beta, it
    return b0, beta, CD_MAX_ITER


def fit_di(
    panel: PanelDataset,
    treated: int = 0,
    rho: float | None = None,
    delta: float = 0.5,
    phi: float = 1.0,
) -> LinearCombFit:
    """Penalized regression on all control series.

    When rho is None, (rho, phi) are selected by leave-one-out
    cross-validation over the pre-period on a log-spaced grid anchored at
    the largest correlation scale of the data, with delta held at its
    given value. rho = 0 removes the penalty entirely and converges to
    the least squares solution.
    """
    y = panel.treated_outcomes[treated, : panel.T1]
    C = panel.control_outcomes[:, : panel.T1].T
    if rho is None:
        rho, phi = _cv_penalty(y, C, delta, phi)
    if rho < 0 or not 0 <= delta <= 1 or phi < 0:
        raise InsufficientData("penalty parameters out of range")
    b0, beta, iters = _coordinate_descent(
        y, C, rho, delta, phi, float(y.mean()), np.zeros(panel.n1)
    )
    resid = y - b0 - C @ beta
    rss = float(resid @ resid)
    nz = int(np.sum(beta != 0))
    dof = max(panel.T1 - nz - 1, 1)
    tss = float(np.sum((y - y.mean()) ** 2))
    return LinearCombFit(
        panel=panel,
        treated=treated,
        intercept=float(b0),
        beta=beta,
        controls=tuple(range(panel.n1)),
        variant="di",
        sigma2=rss / dof,
        r2=1.0 - rss / tss if tss > 0 else 1.0,
        rho=float(rho),
        delta=float(delta),
        phi=float(phi),
        iterations=iters,
    )


def _cv_penalty(y, C, delta, phi_default):
    """Leave-one-out CV over a log grid of (rho, phi).

    Warm starts carry the coefficient vector across folds and grid points,
    which keeps the descent cheap on strongly correlated designs.
    """
    T1, m = C.shape
    yc = y - y.mean()
    scale = 2.0 * float(np.max(np.abs(C.T @ yc))) if m else 1.0
    rho_grid = scale * np.logspace(-6, 0, 13)
    phi_grid = [0.5 * phi_default, phi_default, 2.0 * phi_default]
    best, best_err = (rho_grid[0], phi_default), np.inf
    warm = np.zeros(m)
    for r in rho_grid[::-1]:  # strongest shrinkage first, warm toward OLS
        for ph in phi_grid:
            err = 0.0
            beta = warm.copy()
            for t in range(T1):
                keep = np.arange(T1) != t
                b0, beta, _ = _coordinate_descent(
                    y[keep], C[keep], r, delta, ph, float(y[keep].mean()), beta.copy()
                )
                pred = b0 + C[t] @ beta
                err += (y[t] - pred) ** 2
            warm = beta
            if err < best_err - 1e-12:
                best, best_err = (r, ph), err
    return float(best[0]), float(best[1])


def select_controls_hcw(panel: PanelDataset, treated: int = 0, max_size: int | None = None):
    """Exhaustive best-subset choice for the unpenalized variant.

    For each subset size the subset with maximal R-squared (equivalently
    minimal residual sum of squares) is kept, then sizes compete on
    AIC = T1 * log(RSS / T1) + 2 * (size + 1). Ties prefer the smaller
    model. Raises TooManySubsets when the enumeration would exceed 10^6
    candidates.
    """
    T1, n1 = panel.T1, panel.n1
    if max_size is None:
        max_size = min(n1, T1 - 2)
    max_size = min(max_size, n1, T1 - 2)
    if max_size < 1:
        raise InsufficientData("no admissible subset size")
    total = sum(math.comb(n1, k) for k in range(1, max_size + 1))
    if total > SUBSET_BUDGET:
        raise TooManySubsets(f"{total} subsets exceeds the {SUBSET_BUDGET} budget")
    y = panel.treated_outcomes[treated, : panel.T1]
    C_all = panel.control_outcomes[:, : panel.T1]
    best_by_size = {}
    for k in range(1, max_size + 1):
        best_rss, best_subset = np.inf, None
        for subset in itertools.combinations(range(n1), k):
            X = np.column_stack([np.ones(T1), C_all[list(subset)].T])
            coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=1e-10)
            if rank < k + 1:
                continue
            r = y - X @ coef
            rss = float(r @ r)
            if best_subset is None or rss < best_rss - 1e-12 * max(1.0, rss):
                best_rss, best_subset = rss, subset
        if best_subset is not None:
            best_by_size[k] = (best_subset, best_rss)
    if not best_by_size:
        raise SingularDesign("every candidate subset was rank deficient")
    best_aic, chosen = np.inf, None
    for k in sorted(best_by_size):
        subset, rss = best_by_size[k]
        aic = T1 * math.log(max(rss, 1e-300) / T1) + 2.0 * (k + 1)
        if aic < best_aic - 1e-12:
            best_aic, chosen = aic, subset
    return chosen, fit_hcw(panel, treated, chosen)


def estimate_effects(fit: LinearCombFit) -> EffectEstimate:
    """Project the fitted combination through the post period."""
    panel = fit.panel
    path = fit.intercept + fit.beta @ panel.control_outcomes
    j = fit.treated
    y_post = panel.treated_outcomes[j, panel.T1 :]
    details = {
        "intercept": fit.intercept,
        "beta": fit.beta,
        "controls": tuple(panel.control_labels[i] for i in fit.controls),
        "r2": fit.r2,
    }
    if fit.variant == "di":
        details.update({"rho": fit.rho, "delta": fit.delta, "phi": fit.phi})
    return EffectEstimate(
        method=fit.variant,
        units=(panel.treated_labels[j],),
        times=panel.post_times,
        y=y_post[None, :],
        y0_hat=path[None, panel.T1 :],
        fitted=path[None, :],
        fitted_times=panel.time_labels,
        details=details,
    )


class LongRunEffect(NamedTuple):
    mean: float
    se: float | None
    p_value: float | None
    ar_coef: float
    stationary: bool


def long_run_effect(tau: np.ndarray) -> LongRunEffect:
    """Average post-period effect with serial-correlation-aware inference.

    Fits an AR(1) to the effect series and uses the exact finite-sample
    variance of the mean of a stationary AR(1),

        Var(mean) = (1/T2^2) * (T2*g0 + 2*sum_h (T2-h)*g_h),
        g_h = s2 * a^h / (1 - a^2),

    for a two-sided normal test of a zero mean. A fitted |a| >= 1 is
    reported with stationary=False and no p-value. A constant series has
    zero variance: the test degenerates to p = 0 for a nonzero mean and
    p = 1 for an identically zero series.
    """
    tau = np.asarray(tau, dtype=float).ravel()
    T2 = tau.size
    if T2 < 3:
        raise InsufficientData("need at least 3 post periods for the AR(1) fit")
    mean = float(tau.mean())
    if np.ptp(tau) == 0.0:
        return LongRunEffect(mean, 0.0, 0.0 if mean != 0 else 1.0, 0.0, True)
    X = np.column_stack([np.ones(T2 - 1), tau[:-1]])
    coef, _, rank, _ = np.linalg.lstsq(X, tau[1:], rcond=1e-10)
    if rank < 2:
        return LongRunEffect(mean, 0.0, 0.0 if mean != 0 else 1.0, 0.0, True)
    a = float(coef[1])
    resid = tau[1:] - X @ coef
    if abs(a) >= 1.0:
        return LongRunEffect(mean, None, None, a, False)
    dof = max(T2 - 3, 1)
    s2 = float(resid @ resid) / dof
    h = np.arange(1, T2)
    gamma0 = s2 / (1.0 - a * a)
    gammas = gamma0 * a**h
    var_mean = (T2 * gamma0 + 2.0 * float((T2 - h) @ gammas)) / (T2 * T2)
    se = math.sqrt(max(var_mean, 0.0))
    if se == 0:
        return LongRunEffect(mean, 0.0, 0.0 if mean != 0 else 1.0, a, True)
    p = 2.0 * float(stats.norm.sf(abs(mean) / se))
    return LongRunEffect(mean, se, p, a, True)
