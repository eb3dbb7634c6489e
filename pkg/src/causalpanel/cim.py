"""Bayesian structural time series counterfactual.

The treated unit's observed series is modeled, on the pre-period, as a
local level (optionally with a stochastic slope) plus a static regression
on the control series:

    y_t = level_t + x_t' beta + eps_t,        eps ~ N(0, obs_var)
    level_{t+1} = level_t + slope_t + eta_t,  eta ~ N(0, level_var)
    slope_{t+1} = slope_t + zeta_t,           zeta ~ N(0, slope_var)

Posterior sampling is a Gibbs sweep: states by forward filtering /
backward sampling conditional on everything else, the regression vector
from its conjugate Gaussian conditional (Zellner g-prior, optionally with
a spike-and-slab inclusion step), and the three variances from conjugate
inverse gamma conditionals. The counterfactual is the posterior
predictive of the untreated path: states propagated past the intervention
with fresh innovations, plus regression and observation noise.

Everything is seeded through numpy SeedSequence spawning, so results are
reproducible and chains are independent no matter how they are scheduled.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .effects import EffectEstimate
from .errors import (
    ConvergenceWarning,
    FilterDivergence,
    InsufficientDraws,
    InvalidSpec,
    SingularDesign,
)
from .panel import PanelDataset

JOSEPH_THRESHOLD = 1e-8


@dataclass(frozen=True)
class BstsSpec:
    """Sampler configuration. None means "derive the default from the data".

    Data-derived defaults, with s = sd of the pre-period outcome:
    level_start_mean = first pre-period observation, level_start_sd = 10s,
    slope_start_sd = s, every variance prior IG(0.01, 0.01 s^2),
    coef_prior_g = T1, inclusion_prob = min(0.5, 5 / n1). Setting a
    fixed_* field pins that variance instead of sampling it (the prior
    fields for it are then ignored). use_regression = False drops the
    control regression entirely and fits states only.
    """

    include_slope: bool = False
    spike_slab: bool = False
    use_regression: bool = True
    iterations: int = 10_000
    burn_in: int = 2_000
    chains: int = 2
    level_start_mean: float | None = None
    level_start_sd: float | None = None
    slope_start_mean: float = 0.0
    slope_start_sd: float | None = None
    var_prior_shape: float = 0.01
    var_prior_scale: float | None = None
    coef_prior_g: float | None = None
    inclusion_prob: float | None = None
    fixed_obs_var: float | None = None
    fixed_level_var: float | None = None
    fixed_slope_var: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.iterations <= self.burn_in:
            raise InvalidSpec("iterations must exceed burn_in")
        if self.burn_in < 0 or self.chains < 1:
            raise InvalidSpec("burn_in must be >= 0 and chains >= 1")
        for name in ("level_start_sd", "slope_start_sd", "var_prior_scale"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise InvalidSpec(f"{name} must be positive")
        for name in ("fixed_obs_var", "fixed_level_var", "fixed_slope_var"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise InvalidSpec(f"{name} must be nonnegative")
        if self.inclusion_prob is not None and not 0 < self.inclusion_prob <= 1:
            raise InvalidSpec("inclusion_prob must be in (0, 1]")
        if self.coef_prior_g is not None and self.coef_prior_g <= 0:
            raise InvalidSpec("coef_prior_g must be positive")


class FilterResult(NamedTuple):
    means: np.ndarray       # (T, s) filtered state means
    covs: np.ndarray        # (T, s, s) filtered state covariances
    pred_mean: np.ndarray   # (T,) one-step-ahead observation means
    pred_var: np.ndarray    # (T,) one-step-ahead observation variances
    loglik: float


def _transition(include_slope: bool, level_var: float, slope_var: float):
    if include_slope:
        G = np.array([[1.0, 1.0], [0.0, 1.0]])
        Q = np.diag([level_var, slope_var])
    else:
        G = np.array([[1.0]])
        Q = np.array([[level_var]])
    return G, Q


def kalman_filter(
    z: np.ndarray,
    obs_var: float,
    level_var: float,
    slope_var: float = 0.0,
    include_slope: bool = False,
    init_mean: np.ndarray | None = None,
    init_cov: np.ndarray | None = None,
    joseph: bool = False,
) -> FilterResult:
    """Forward filter for the local level (+slope) model.

    init_mean / init_cov are the prior for the state at the FIRST
    observation. joseph selects the numerically stable covariance update,
    needed when a variance is many orders below the data scale.

    Raises FilterDivergence when the one-step predictive variance goes
    non-finite, or hits zero while the observation disagrees with the
    point prediction. A zero variance with a matching observation is the
    degenerate exact-fit case and passes through with a zero-width
    prediction.
    """
    z = np.asarray(z, dtype=float)
    T = z.size
    s = 2 if include_slope else 1
    G, Q = _transition(include_slope, level_var, slope_var)
    H = np.zeros(s)
    H[0] = 1.0
    m = np.zeros(s) if init_mean is None else np.asarray(init_mean, dtype=float)
    P = np.eye(s) if init_cov is None else np.asarray(init_cov, dtype=float)

    means = np.empty((T, s))
    covs = np.empty((T, s, s))
    pred_mean = np.empty(T)
    pred_var = np.empty(T)
    loglik = 0.0
    I = np.eye(s)
    for t in range(T):
        if t > 0:
            m = G @ m
            P = G @ P @ G.T + Q
        f = float(H @ m)
        q = float(H @ P @ H + obs_var)
        if not math.isfinite(q):
            raise FilterDivergence(
                f"one-step predictive variance {q} at position {t}"
            )
        if q <= 0.0:
            # A fully pinned zero-variance model predicts a point mass. That
            # is fine exactly when the observation sits on it; the update is
            # then a no-op and the observation contributes no density term.
            v = z[t] - f
            if abs(v) > 1e-9 * max(1.0, abs(z[t])):
                raise FilterDivergence(
                    f"zero predictive variance at position {t} cannot "
                    f"explain innovation {v}"
                )
            pred_mean[t] = f
            pred_var[t] = 0.0
            means[t] = m
            covs[t] = P
            continue
        pred_mean[t] = f
        pred_var[t] = q
        v = z[t] - f
        loglik += -0.5 * (math.log(2.0 * math.pi * q) + v * v / q)
        K = (P @ H) / q
        m = m + K * v
        if joseph:
            A = I - np.outer(K, H)
            P = A @ P @ A.T + obs_var * np.outer(K, K)
        else:
            P = P - np.outer(K, H @ P)
        P = 0.5 * (P + P.T)
        means[t] = m
        covs[t] = P
    return FilterResult(means, covs, pred_mean, pred_var, float(loglik))


def ffbs(
    rng: np.random.Generator,
    z: np.ndarray,
    obs_var: float,
    level_var: float,
    slope_var: float = 0.0,
    include_slope: bool = False,
    init_mean: np.ndarray | None = None,
    init_cov: np.ndarray | None = None,
    joseph: bool = False,
):
    """Draw a state path from its full conditional; returns (states, filter)."""
    filt = kalman_filter(
        z, obs_var, level_var, slope_var, include_slope, init_mean, init_cov, joseph
    )
    T = z.size
    s = 2 if include_slope else 1
    G, Q = _transition(include_slope, level_var, slope_var)
    states = np.empty((T, s))
    states[T - 1] = _mvn_draw(rng, filt.means[T - 1], filt.covs[T - 1])
    for t in range(T - 2, -1, -1):
        P = filt.covs[t]
        P_pred = G @ P @ G.T + Q
        PG = P @ G.T
        J = _solve_psd(P_pred, PG.T).T
        mean = filt.means[t] + J @ (states[t + 1] - G @ filt.means[t])
        cov = P - J @ P_pred @ J.T
        states[t] = _mvn_draw(rng, mean, cov)
    return states, filt


def _solve_psd(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve A X = B for symmetric positive semidefinite A."""
    try:
        return np.linalg.solve(A, B)
    except np.linalg.LinAlgError:
        return np.linalg.pinv(A) @ B


def _mvn_draw(rng: np.random.Generator, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    cov = 0.5 * (cov + cov.T)
    s = mean.size
    if s == 1:
        sd = math.sqrt(max(float(cov[0, 0]), 0.0))
        return mean + sd * rng.standard_normal(1)
    vals, vecs = np.linalg.eigh(cov)
    vals = np.clip(vals, 0.0, None)
    return mean + vecs @ (np.sqrt(vals) * rng.standard_normal(s))


@dataclass
class CimPosterior:
    """Retained draws from all chains plus convergence summaries."""

    panel: PanelDataset
    treated: int
    spec: BstsSpec
    beta: np.ndarray        # (L, n1)
    inclusion: np.ndarray   # (L, n1)
    obs_var: np.ndarray     # (L,)
    level_var: np.ndarray   # (L,)
    slope_var: np.ndarray   # (L,)
    y0: np.ndarray          # (L, T2) posterior predictive counterfactual
    pre_pred: np.ndarray    # (L, T1) one-step-ahead predictive draws
    level_last: np.ndarray  # (L,)
    psrf: dict = field(default_factory=dict)
    convergence_flag: bool = False

    @property
    def n_draws(self) -> int:
        return self.y0.shape[0]


def _resolved(spec: BstsSpec, y_pre: np.ndarray, n1: int):
    s = float(np.std(y_pre, ddof=1)) if y_pre.size > 1 else 0.0
    if s == 0.0:
        s = 1.0
    level_mean = spec.level_start_mean if spec.level_start_mean is not None else float(y_pre[0])
    level_sd = spec.level_start_sd if spec.level_start_sd is not None else 10.0 * s
    slope_sd = spec.slope_start_sd if spec.slope_start_sd is not None else s
    var_scale = spec.var_prior_scale if spec.var_prior_scale is not None else 0.01 * s * s
    g = spec.coef_prior_g if spec.coef_prior_g is not None else None  # resolved later (T1)
    pi = spec.inclusion_prob if spec.inclusion_prob is not None else min(0.5, 5.0 / n1)
    return level_mean, level_sd, slope_sd, var_scale, g, pi, s


def _inv_gamma(rng, shape: float, scale: float) -> float:
    return scale / rng.gamma(shape)


def _run_chain(
    seed: np.random.SeedSequence,
    y: np.ndarray,
    X: np.ndarray | None,
    T1: int,
    spec: BstsSpec,
    resolved,
):
    rng = np.random.default_rng(seed)
    level_mean, level_sd, slope_sd, var_scale, g, pi, s_pre = resolved
    T = y.size
    T2 = T - T1
    n1 = X.shape[1] if X is not None else 0
    y_pre = y[:T1]
    X_pre = X[:T1] if X is not None else None
    X_post = X[T1:] if X is not None else None
    if g is None:
        g = float(T1)
    shape0 = spec.var_prior_shape

    include_slope = spec.include_slope
    sdim = 2 if include_slope else 1
    init_mean = np.array([level_mean, spec.slope_start_mean])[:sdim]
    init_cov = np.diag([level_sd**2, slope_sd**2])[:sdim, :sdim]

    obs_var = spec.fixed_obs_var if spec.fixed_obs_var is not None else s_pre**2
    level_var = spec.fixed_level_var if spec.fixed_level_var is not None else var_scale
    slope_var = spec.fixed_slope_var if spec.fixed_slope_var is not None else var_scale
    if not include_slope:
        slope_var = 0.0
    beta = np.zeros(n1)
    gamma = np.ones(n1, dtype=bool)

    keep = spec.iterations - spec.burn_in
    out_beta = np.empty((keep, n1))
    out_inc = np.empty((keep, n1), dtype=bool)
    out_vars = np.empty((keep, 3))
    out_y0 = np.empty((keep, T2))
    out_pre = np.empty((keep, T1))
    out_level = np.empty(keep)

    data_var = float(np.var(y_pre)) if T1 > 1 else 1.0
    for it in range(spec.iterations):
        joseph = (
            min(obs_var, level_var, *( [slope_var] if include_slope else [] ))
            < JOSEPH_THRESHOLD * max(data_var, 1e-300)
        )
        z = y_pre - (X_pre @ beta if X is not None else 0.0)
        states, filt = ffbs(
            rng, z, obs_var, level_var, slope_var, include_slope,
            init_mean, init_cov, joseph,
        )
        levels = states[:, 0]

        if X is not None:
            u = y_pre - levels
            if spec.spike_slab:
                gamma = _ssvs_step(rng, gamma, X_pre, u, obs_var, g, pi)
            else:
                gamma = np.ones(n1, dtype=bool)
            beta = np.zeros(n1)
            active = np.flatnonzero(gamma)
            if active.size:
                Xa = X_pre[:, active]
                A = (Xa.T @ Xa) * (1.0 + 1.0 / g)
                try:
                    cf = np.linalg.cholesky(A)
                except np.linalg.LinAlgError as exc:
                    raise SingularDesign(
                        "regression conditional is singular; controls collinear"
                    ) from exc
                mean = np.linalg.solve(A, Xa.T @ u)
                half = np.linalg.solve(cf.T, rng.standard_normal(active.size))
                beta[active] = mean + math.sqrt(obs_var) * half

        resid = y_pre - levels - (X_pre @ beta if X is not None else 0.0)
        if spec.fixed_obs_var is None:
            obs_var = _inv_gamma(
                rng, shape0 + 0.5 * T1, var_scale + 0.5 * float(resid @ resid)
            )
        if spec.fixed_level_var is None:
            incr = levels[1:] - levels[:-1]
            if include_slope:
                incr = incr - states[:-1, 1]
            level_var = _inv_gamma(
                rng, shape0 + 0.5 * (T1 - 1), var_scale + 0.5 * float(incr @ incr)
            )
        if include_slope and spec.fixed_slope_var is None:
            sincr = states[1:, 1] - states[:-1, 1]
            slope_var = _inv_gamma(
                rng, shape0 + 0.5 * (T1 - 1), var_scale + 0.5 * float(sincr @ sincr)
            )

        if it >= spec.burn_in:
            k = it - spec.burn_in
            G, Q = _transition(include_slope, level_var, slope_var)
            alpha = states[-1].copy()
            y0 = np.empty(T2)
            for t in range(T2):
                noise = np.zeros(sdim)
                if level_var > 0:
                    noise[0] = rng.normal(0.0, math.sqrt(level_var))
                if include_slope and slope_var > 0:
                    noise[1] = rng.normal(0.0, math.sqrt(slope_var))
                alpha = G @ alpha + noise
                reg = float(X_post[t] @ beta) if X is not None else 0.0
                y0[t] = alpha[0] + reg + rng.normal(0.0, math.sqrt(obs_var))
            out_y0[k] = y0
            out_beta[k] = beta
            out_inc[k] = gamma
            out_vars[k] = (obs_var, level_var, slope_var)
            reg_pre = X_pre @ beta if X is not None else np.zeros(T1)
            out_pre[k] = (
                filt.pred_mean
                + reg_pre
                + np.sqrt(filt.pred_var) * rng.standard_normal(T1)
            )
            out_level[k] = levels[-1]

    return out_beta, out_inc, out_vars, out_y0, out_pre, out_level


def _ssvs_step(rng, gamma, X, u, obs_var, g, pi):
    """One systematic-scan update of the inclusion indicators.

    The regression vector is integrated out under the g-prior, so each
    indicator's conditional is a two-point distribution over marginal
    likelihoods. Models whose active design is singular get probability
    zero.
    """
    n1 = gamma.size
    log_pi, log_1mpi = math.log(pi), math.log1p(-pi) if pi < 1 else -math.inf

    def log_ml(active):
        k = int(active.sum())
        if k == 0:
            return 0.0
        Xa = X[:, active]
        A = Xa.T @ Xa
        try:
            cf = np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            return -math.inf
        w = np.linalg.solve(cf, Xa.T @ u)
        fit = float(w @ w)
        return -0.5 * k * math.log1p(g) + g / (2.0 * obs_var * (1.0 + g)) * fit

    gamma = gamma.copy()
    current = log_ml(gamma)
    for i in range(n1):
        flipped = gamma.copy()
        flipped[i] = ~flipped[i]
        other = log_ml(flipped)
        if gamma[i]:
            log_on, log_off = current, other
        else:
            log_on, log_off = other, current
        a = log_on + log_pi
        b = log_off + log_1mpi
        if a == -math.inf and b == -math.inf:
            p_on = 0.0
        else:
            mx = max(a, b)
            p_on = math.exp(a - mx) / (math.exp(a - mx) + math.exp(b - mx))
        new_val = rng.random() < p_on
        if new_val != gamma[i]:
            gamma[i] = new_val
            current = other
    return gamma


def split_chain_psrf(chains: list[np.ndarray]) -> float:
    """Potential scale reduction factor with each chain split in half."""
    seqs = []
    for c in chains:
        c = np.asarray(c, dtype=float)
        half = c.size // 2
        if half < 2:
            return float("nan")
        seqs.append(c[:half])
        seqs.append(c[half : 2 * half])
    N = seqs[0].size
    means = np.array([s.mean() for s in seqs])
    variances = np.array([s.var(ddof=1) for s in seqs])
    W = float(variances.mean())
    B = N * float(means.var(ddof=1))
    if W == 0.0:
        return 1.0
    var_plus = (N - 1) / N * W + B / N
    return float(math.sqrt(var_plus / W))


def fit_cim(
    panel: PanelDataset,
    treated: int = 0,
    spec: BstsSpec | None = None,
    threads: int = 1,
) -> CimPosterior:
    """Run the Gibbs sampler and collect posterior draws.

    Chains are seeded independently by spawning from spec.seed; running
    them on a thread pool (threads > 1) cannot change the draws. The
    split-chain PSRF is recorded per monitored scalar and
    convergence_flag is set when any exceeds 1.2.
    """
    spec = spec or BstsSpec()
    if panel.T1 < 10:
        warnings.warn(
            f"only {panel.T1} pre-intervention periods; posterior will be "
            "prior dominated",
            UserWarning,
            stacklevel=2,
        )
    y = panel.treated_outcomes[treated]
    X = panel.control_outcomes.T.copy() if spec.use_regression else None
    resolved = _resolved(spec, y[: panel.T1], panel.n1)

    seeds = np.random.SeedSequence(spec.seed).spawn(spec.chains)
    args = [(sd, y, X, panel.T1, spec, resolved) for sd in seeds]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda a: _run_chain(*a), args))
    else:
        results = [_run_chain(*a) for a in args]

    beta = np.concatenate([r[0] for r in results])
    inc = np.concatenate([r[1] for r in results])
    variances = np.concatenate([r[2] for r in results])
    y0 = np.concatenate([r[3] for r in results])
    pre = np.concatenate([r[4] for r in results])
    level_last = np.concatenate([r[5] for r in results])

    psrf = {}
    if spec.chains >= 2:
        per_chain = lambda k: [r[k] for r in results]
        for i in range(beta.shape[1]):
            psrf[f"beta_{i}"] = split_chain_psrf([b[:, i] for b in per_chain(0)])
        names = ["obs_var", "level_var", "slope_var"]
        monitored = [0, 1] + ([2] if spec.include_slope else [])
        fixed = [
            spec.fixed_obs_var is not None,
            spec.fixed_level_var is not None,
            spec.fixed_slope_var is not None,
        ]
        for j in monitored:
            if not fixed[j]:
                psrf[names[j]] = split_chain_psrf([v[:, j] for v in per_chain(2)])
        psrf["level_last"] = split_chain_psrf(per_chain(5))
    flag = any(np.isfinite(v) and v > 1.2 for v in psrf.values())
    if flag:
        worst = max(
            (v for v in psrf.values() if np.isfinite(v)), default=float("nan")
        )
        warnings.warn(
            f"split-chain scale reduction reached {worst:.3f} (> 1.2); "
            "chains look unmixed, consider more iterations",
            ConvergenceWarning,
            stacklevel=2,
        )

    return CimPosterior(
        panel=panel,
        treated=treated,
        spec=spec,
        beta=beta,
        inclusion=inc,
        obs_var=variances[:, 0],
        level_var=variances[:, 1],
        slope_var=variances[:, 2],
        y0=y0,
        pre_pred=pre,
        level_last=level_last,
        psrf=psrf,
        convergence_flag=flag,
    )


def credible_interval(
    posterior: CimPosterior,
    time: int,
    level: float = 0.95,
    interpolation: str = "linear",
):
    """Equal-tail posterior interval for the effect at post-period index time.

    Implemented as (y - upper quantile of y0 draws, y - lower quantile).
    Quantiles interpolate linearly between order statistics by default;
    interpolation="nearest" switches to the nearest-rank rule (the
    ceil(q * L)-th order statistic). Raises InsufficientDraws when fewer
    than ceil(2 / (1 - level)) draws are available.
    """
    if not 0 <= time < posterior.panel.T2:
        raise InvalidSpec(f"time index {time} outside the post period")
    needed = math.ceil(2.0 / (1.0 - level))
    if posterior.n_draws < needed:
        raise InsufficientDraws(
            f"{posterior.n_draws} draws cannot support a {level:.0%} interval"
        )
    if interpolation not in ("linear", "nearest"):
        raise InvalidSpec(f"unknown quantile rule {interpolation!r}")
    method = "linear" if interpolation == "linear" else "inverted_cdf"
    y_obs = float(
        posterior.panel.treated_outcomes[posterior.treated, posterior.panel.T1 + time]
    )
    alpha = 1.0 - level
    hi_q = float(np.quantile(posterior.y0[:, time], 1.0 - alpha / 2, method=method))
    lo_q = float(np.quantile(posterior.y0[:, time], alpha / 2, method=method))
    return y_obs - hi_q, y_obs - lo_q


def estimate_effects(posterior: CimPosterior, level: float = 0.95) -> EffectEstimate:
    """Posterior mean counterfactual with equal-tail bands."""
    panel = posterior.panel
    j = posterior.treated
    y_post = panel.treated_outcomes[j, panel.T1 :]
    y0_mean = posterior.y0.mean(axis=0)
    bounds = [credible_interval(posterior, t, level) for t in range(panel.T2)]
    lower = np.array([b[0] for b in bounds])
    upper = np.array([b[1] for b in bounds])
    tau = y_post - y0_mean
    fitted = np.concatenate([posterior.pre_pred.mean(axis=0), y0_mean])
    return EffectEstimate(
        method="cim",
        units=(panel.treated_labels[j],),
        times=panel.post_times,
        y=y_post[None, :],
        y0_hat=y0_mean[None, :],
        lower=np.minimum(lower, tau)[None, :],
        upper=np.maximum(upper, tau)[None, :],
        level=level,
        fitted=fitted[None, :],
        fitted_times=panel.time_labels,
        details={
            "psrf": posterior.psrf,
            "convergence_flag": posterior.convergence_flag,
            "mean_inclusion": posterior.inclusion.mean(axis=0),
            "draws": posterior.n_draws,
        },
    )


class PreFitDiagnostics(NamedTuple):
    times: tuple
    observed: np.ndarray
    pred_mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    mse: float
    mean_width: float


def diagnose_fit(
    posterior: CimPosterior,
    panel: PanelDataset | None = None,
    level: float = 0.95,
) -> PreFitDiagnostics:
    """One-step-ahead predictive check over the pre-period.

    Reports per-period predictive means and equal-tail bands from the
    stored predictive draws, the mean squared one-step error, and the
    average band width. Systematic misses here mean the structural model
    does not track the series even before the intervention. panel defaults
    to the one the posterior was fit on.
    """
    panel = posterior.panel if panel is None else panel
    y_pre = panel.treated_outcomes[posterior.treated, : panel.T1]
    mean = posterior.pre_pred.mean(axis=0)
    alpha = 1.0 - level
    lower = np.quantile(posterior.pre_pred, alpha / 2, axis=0)
    upper = np.quantile(posterior.pre_pred, 1.0 - alpha / 2, axis=0)
    mse = float(np.mean((y_pre - mean) ** 2))
    return PreFitDiagnostics(
        panel.pre_times,
        y_pre,
        mean,
        lower,
        upper,
        mse,
        float(np.mean(upper - lower)),
    )
