"""Common result container for all counterfactual estimators."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import InvalidStructure


@dataclass(frozen=True)
class EffectEstimate:
    """Post-period effect estimates for the treated units.

    Attributes
    ----------
    method : str
        Name of the estimator that produced this ("did", "lfm", "scm",
        "hcw", "di", "cim", ...).
    units : tuple of str
        Treated unit labels, length m.
    times : tuple
        Post-period time labels, length T2.
    y : np.ndarray
        (m, T2) observed treated outcomes.
    y0_hat : np.ndarray
        (m, T2) estimated untreated counterfactuals. The per-cell effect is
        always ``tau_hat = y - y0_hat``; it is a derived property so the
        accounting identity holds exactly.
    lower, upper : np.ndarray or None
        (m, T2) interval bounds when the estimator provides them.
    level : float or None
        Nominal coverage of the interval, e.g. 0.95.
    fitted : np.ndarray or None
        (m, T) model path over the whole sample, used by fit diagnostics
        (pre-period residuals) and the placebo ratio.
    details : mapping
        Estimator-specific extras (weights, penalty values, convergence
        flags). Values must be JSON-friendly or numpy arrays.
    """

    method: str
    units: tuple
    times: tuple
    y: np.ndarray
    y0_hat: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    level: float | None = None
    fitted: np.ndarray | None = None
    fitted_times: tuple | None = None
    details: Mapping = field(default_factory=dict)

    def __post_init__(self):
        m, T2 = len(self.units), len(self.times)
        y = np.asarray(self.y, dtype=float).reshape(m, T2)
        y0 = np.asarray(self.y0_hat, dtype=float).reshape(m, T2)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "y0_hat", y0)
        for name in ("lower", "upper"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(
                    self, name, np.asarray(val, dtype=float).reshape(m, T2)
                )
        if (self.lower is None) != (self.upper is None):
            raise InvalidStructure("lower and upper must be provided together")
        if self.lower is not None and np.any(self.lower > self.upper + 1e-12):
            raise InvalidStructure("interval lower bound exceeds upper bound")
        if self.fitted is not None:
            f = np.asarray(self.fitted, dtype=float)
            if f.shape[0] != m:
                raise InvalidStructure("fitted path row count does not match units")
            object.__setattr__(self, "fitted", f)

    @property
    def tau_hat(self) -> np.ndarray:
        """(m, T2) per-cell effect, y minus counterfactual."""
        return self.y - self.y0_hat

    def mean_effect(self) -> float:
        """Average tau_hat over all treated cells."""
        return float(self.tau_hat.mean())

    def mean_reduction(self) -> float:
        """Average of (counterfactual - observed), the reporting convention
        for interventions framed as losses."""
        return -self.mean_effect()

    def to_records(self) -> list[dict]:
        """One dict per (unit, time) cell, post-period only."""
        records = []
        tau = self.tau_hat
        for i, unit in enumerate(self.units):
            for t, time in enumerate(self.times):
                rec = {
                    "unit": str(unit),
                    "time": time,
                    "y": float(self.y[i, t]),
                    "y0_hat": float(self.y0_hat[i, t]),
                    "tau_hat": float(tau[i, t]),
                    "lower": None if self.lower is None else float(self.lower[i, t]),
                    "upper": None if self.upper is None else float(self.upper[i, t]),
                }
                records.append(rec)
        return records

    def pre_residuals(self, panel) -> np.ndarray:
        """(m, T1) pre-period residuals y - fitted, requires a fitted path."""
        if self.fitted is None:
            raise InvalidStructure(f"estimator {self.method!r} stored no fitted path")
        treated = panel.treated_outcomes
        if treated.shape[0] != len(self.units):
            raise InvalidStructure("panel treated block does not match estimate")
        return treated[:, : panel.T1] - self.fitted[:, : panel.T1]
