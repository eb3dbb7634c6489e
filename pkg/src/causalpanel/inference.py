"""Placebo-based inference: fit-quality ratios over the donor pool.

The test statistic for a unit is

    r = (SSE_post / T2) / (SSE_pre / T1)

computed from the unit's own counterfactual fit. Each control is recast
as a pseudo-treated unit (donors: the remaining controls; the genuine
treated unit never serves as a donor) and refit with the same estimator.
A genuinely affected treated unit should sit high in the resulting
distribution of ratios; the permutation p-value counts how many units
match or beat it.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .effects import EffectEstimate
from .errors import InvalidStructure, PerfectPreFit, TestUndefined
from .panel import PanelDataset, pseudo_treated


def r_statistic(
    pre_residuals: np.ndarray,
    post_residuals: np.ndarray,
    scale: float = 1.0,
) -> float:
    """Post/pre mean squared error ratio.

    Raises PerfectPreFit when the pre-period root mean squared error is
    zero at float tolerance relative to scale (the magnitude of the series
    the fit targeted); an exact interpolation never leaves residuals that
    are exactly zero, only rounding dust.
    """
    pre = np.asarray(pre_residuals, dtype=float).ravel()
    post = np.asarray(post_residuals, dtype=float).ravel()
    sse_pre = float(pre @ pre)
    sse_post = float(post @ post)
    tol = 1e-10 * max(scale, 1e-300)
    if sse_pre <= tol * tol * pre.size:
        raise PerfectPreFit("pre-period SSE is zero at float precision, ratio undefined")
    return (len(pre) * sse_post) / (len(post) * sse_pre)


def _unit_r(panel: PanelDataset, estimate: EffectEstimate) -> float:
    pre = estimate.pre_residuals(panel)
    post = estimate.tau_hat
    scale = float(np.sqrt(np.mean(panel.treated_outcomes[:, : panel.T1] ** 2)))
    return r_statistic(pre, post, scale=scale)


@dataclass(frozen=True)
class PlaceboResult:
    """Ratios for the treated unit and every tested control.

    labels[0] is the treated unit; r is aligned with labels. rank counts
    from the smallest ratio upward (n_tested = top), with ties resolved
    conservatively against the treated unit. excluded lists controls
    dropped for a perfect pre-period fit.
    """

    method: str
    labels: tuple
    r: np.ndarray
    excluded: tuple
    p_value: float
    rank: int

    @property
    def n_tested(self) -> int:
        return len(self.labels)

    @property
    def r_treated(self) -> float:
        return float(self.r[0])


def placebo_test(
    panel: PanelDataset,
    fit_fn: Callable[[PanelDataset], EffectEstimate],
    threads: int = 1,
) -> PlaceboResult:
    """Refit the estimator with every control as pseudo-treated.

    fit_fn takes a single-treated panel and must return an estimate with a
    stored fitted path (pre-period residuals are needed for the ratio).
    The panel itself must carry exactly one treated unit; reduce it with
    treated_average or single_treated first otherwise. Results do not
    depend on the thread count: placebo fits are collected in donor order.
    """
    if panel.n2 != 1:
        raise InvalidStructure(
            "placebo test needs a single treated unit; collapse or select one first"
        )
    if panel.n1 < 2:
        raise InvalidStructure("placebo test needs at least two controls")

    est_treated = fit_fn(panel)
    try:
        r_treated = _unit_r(panel, est_treated)
    except PerfectPreFit as exc:
        raise TestUndefined(
            "the treated unit has an exact pre-period fit; its ratio is undefined"
        ) from exc

    def one_control(j: int):
        pp = pseudo_treated(panel, j)
        try:
            return float(_unit_r(pp, fit_fn(pp)))
        except PerfectPreFit:
            return None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            control_r = list(pool.map(one_control, range(panel.n1)))
    else:
        control_r = [one_control(j) for j in range(panel.n1)]

    labels = [panel.treated_labels[0]]
    values = [r_treated]
    excluded = []
    for j, rj in enumerate(control_r):
        if rj is None:
            excluded.append(panel.control_labels[j])
        else:
            labels.append(panel.control_labels[j])
            values.append(rj)

    if excluded:
        warnings.warn(
            "excluded from the placebo reference distribution for perfect "
            f"pre-period fit: {', '.join(str(u) for u in excluded)}",
            UserWarning,
            stacklevel=2,
        )
    r = np.array(values)
    n_tested = len(values)
    count_ge = int(np.sum(r >= r_treated))
    return PlaceboResult(
        method=est_treated.method,
        labels=tuple(labels),
        r=r,
        excluded=tuple(excluded),
        p_value=count_ge / n_tested,
        rank=n_tested + 1 - count_ge,
    )
