"""Synthetic panels with known effects, and a Monte Carlo bias harness.

Each data generating family matches the identifying assumption of one
estimator family, so the harness can demonstrate where each method is
unbiased and how it degrades off its home turf:

    parallel_trends   additive unit + time structure
    lfm               pure interactive factor structure
    lfm_convex        factors + common trend, treated loadings inside the
                      convex hull of the control loadings
    hcw_span          factors + unit levels, treated loadings an arbitrary
                      linear combination of control loadings

All randomness flows through numpy SeedSequence spawning, so a report is
reproducible from (spec, replications) alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple

import numpy as np

from .effects import EffectEstimate
from .errors import EstimationError, ExperimentDegenerate, InvalidSpec
from .panel import PanelDataset

FAMILIES = ("parallel_trends", "lfm", "lfm_convex", "hcw_span")
EFFECTS = ("constant", "linear", "zero")


@dataclass(frozen=True)
class DgpSpec:
    """Parameters of one synthetic panel family."""

    family: str
    n1: int = 10
    n2: int = 1
    T1: int = 20
    T2: int = 5
    J: int = 2
    K: int = 0
    noise_sd: float = 1.0
    factor_scale: float = 1.0
    loading_scale: float = 1.0
    unit_effect_scale: float = 1.0
    time_effect_scale: float = 1.0
    covariate_effect_scale: float = 1.0
    effect: str = "constant"
    effect_size: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidSpec(f"unknown family {self.family!r}")
        if self.effect not in EFFECTS:
            raise InvalidSpec(f"unknown effect schedule {self.effect!r}")
        if self.n1 < 2 or self.n2 < 1:
            raise InvalidSpec("need n1 >= 2 and n2 >= 1")
        if self.T1 < 3 or self.T2 < 1:
            raise InvalidSpec("need T1 >= 3 and T2 >= 1")
        if self.family != "parallel_trends" and not 1 <= self.J <= self.n1:
            raise InvalidSpec("need 1 <= J <= n1 for factor families")
        if self.K < 0 or self.noise_sd < 0:
            raise InvalidSpec("K and noise_sd must be nonnegative")


def _effect_schedule(spec: DgpSpec) -> np.ndarray:
    T2 = spec.T2
    if spec.effect == "zero":
        sched = np.zeros(T2)
    elif spec.effect == "constant":
        sched = np.full(T2, spec.effect_size)
    else:
        sched = spec.effect_size * np.arange(1, T2 + 1) / T2
    return np.tile(sched, (spec.n2, 1))


def generate(spec: DgpSpec, rng: np.random.Generator | None = None):
    """Draw one panel; returns (PanelDataset, tau_true of shape (n2, T2))."""
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    n, T = spec.n1 + spec.n2, spec.T1 + spec.T2

    if spec.family == "parallel_trends":
        kappa = rng.normal(0.0, spec.unit_effect_scale, n)
        mu = rng.normal(0.0, spec.time_effect_scale, T)
        base = kappa[:, None] + mu[None, :]
    else:
        f = rng.normal(0.0, spec.factor_scale, (spec.J, T))
        lam_c = rng.normal(0.0, spec.loading_scale, (spec.n1, spec.J))
        if spec.family == "lfm":
            lam_t = rng.normal(0.0, spec.loading_scale, (spec.n2, spec.J))
            base = np.vstack([lam_c, lam_t]) @ f
        elif spec.family == "lfm_convex":
            weights = rng.dirichlet(np.ones(spec.n1), size=spec.n2)
            lam_t = weights @ lam_c
            mu = rng.normal(0.0, spec.time_effect_scale, T)
            base = np.vstack([lam_c, lam_t]) @ f + mu[None, :]
        else:  # hcw_span
            coef = rng.normal(0.0, 1.0, (spec.n2, spec.n1))
            lam_t = coef @ lam_c
            kappa = rng.normal(0.0, spec.unit_effect_scale, n)
            base = np.vstack([lam_c, lam_t]) @ f + kappa[:, None]

    covariates = None
    cov_labels = ()
    if spec.K:
        covariates = rng.normal(0.0, 1.0, (n, T, spec.K))
        theta = rng.normal(0.0, spec.covariate_effect_scale, spec.K)
        base = base + covariates @ theta
        cov_labels = tuple(f"x{k}" for k in range(spec.K))

    y = base + rng.normal(0.0, spec.noise_sd, (n, T))
    tau = _effect_schedule(spec)
    y[spec.n1 :, spec.T1 :] += tau

    panel = PanelDataset(
        outcomes=y,
        n1=spec.n1,
        T1=spec.T1,
        unit_labels=tuple(f"unit{i}" for i in range(n)),
        time_labels=tuple(range(T)),
        covariates=covariates,
        covariate_labels=cov_labels,
    )
    return panel, tau


class BiasReport(NamedTuple):
    mean_bias: float
    mc_se: float
    rmse: float
    coverage: float | None
    replications: int
    failures: int


def bias_experiment(
    spec: DgpSpec,
    estimator: Callable[[PanelDataset], EffectEstimate],
    replications: int = 200,
) -> BiasReport:
    """Monte Carlo bias of an estimator's average effect under a known DGP.

    Per replication, the error is mean(tau_hat) - mean(tau_true). The
    summary accumulates with compensated summation so long runs do not
    lose precision. Replications where the estimator raises an
    EstimationError are counted as failures; more than 10% of them
    invalidates the experiment (ExperimentDegenerate). Coverage is
    reported when the estimator returns interval bounds: the fraction of
    treated post cells whose true effect lands inside.
    """
    if replications < 1:
        raise InvalidSpec("need at least one replication")
    errors = []
    cover_hits, cover_cells = 0, 0
    failures = 0
    seeds = np.random.SeedSequence(spec.seed).spawn(replications)
    for b in range(replications):
        panel, tau = generate(spec, np.random.default_rng(seeds[b]))
        try:
            est = estimator(panel)
        except EstimationError:
            failures += 1
            continue
        tau_hat = est.tau_hat
        if tau_hat.shape != tau.shape:
            # pooled estimators return one row; compare against the average
            tau = tau.mean(axis=0, keepdims=True)
        errors.append(float(tau_hat.mean() - tau.mean()))
        if est.lower is not None:
            inside = (est.lower <= tau) & (tau <= est.upper)
            cover_hits += int(inside.sum())
            cover_cells += inside.size
    if failures > 0.1 * replications:
        raise ExperimentDegenerate(
            f"{failures} of {replications} replications failed"
        )
    used = len(errors)
    mean_bias = math.fsum(errors) / used
    sq = math.fsum((e - mean_bias) ** 2 for e in errors)
    mc_se = math.sqrt(sq / (used - 1) / used) if used > 1 else float("nan")
    rmse = math.sqrt(math.fsum(e * e for e in errors) / used)
    coverage = cover_hits / cover_cells if cover_cells else None
    return BiasReport(mean_bias, mc_se, rmse, coverage, used, failures)
