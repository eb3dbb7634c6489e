"""End-to-end acceptance battery, one test per release criterion.

Criteria 1 through 7 reproduce the West German reunification study and
need the vendored panel at data/german_reunification.csv. This build
environment has no network access, so when the file is absent those tests
fail with instructions instead of silently passing; fetch the data with
scripts/fetch_german_data.py on a networked machine and rerun. Criteria 8
and 9 are synthetic and always run.
"""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from causalpanel import cim, did, hcw, inference, lfm, scm, sim
from causalpanel.cli import main
from causalpanel.panel import load_csv

import oracles
from conftest import build_panel

GERMAN = Path(__file__).resolve().parent.parent / "data" / "german_reunification.csv"

MISSING_DATA_MSG = (
    f"{GERMAN} is missing. The panel (17 OECD countries, annual per-capita "
    "GDP 1960-2003, West Germany treated from 1990) is public but this "
    "build environment has no network route to fetch it: run "
    "scripts/fetch_german_data.py on a networked machine (source archive "
    "DOI 10.7910/DVN/24714 on the Harvard Dataverse), vendor the CSV under "
    "data/, and rerun the acceptance suite."
)


def load_german():
    if not GERMAN.exists():
        pytest.fail(MISSING_DATA_MSG)
    return load_csv(GERMAN, treated=["West Germany"], t1=1989)


class Stopwatch:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def test_criterion_1_did_reproduction():
    panel = load_german()
    with Stopwatch() as sw:
        est = did.estimate_effects(did.fit_did(panel))
    assert est.mean_reduction() == pytest.approx(-604.0, abs=1.0)
    assert sw.elapsed < 1.0


def test_criterion_2_hcw_reproduction():
    panel = load_german()
    with Stopwatch() as sw:
        est = hcw.estimate_effects(hcw.fit_hcw(panel))
    assert est.mean_reduction() == pytest.approx(1473.0, rel=0.01)
    assert sw.elapsed < 1.0


def test_criterion_3_hcw_placebo():
    panel = load_german()
    with Stopwatch() as sw:
        result = inference.placebo_test(
            panel, lambda p: hcw.estimate_effects(hcw.fit_hcw(p))
        )
    assert result.n_tested == 17
    assert result.r_treated == pytest.approx(71.53, rel=0.01)
    assert result.rank == 16
    assert sw.elapsed < 10.0


def test_criterion_4_lfm_reproduction():
    panel = load_german()
    with Stopwatch() as sw:
        est = lfm.estimate_effects_xu(panel, J="auto", fe=("unit", "time"))
    assert est.mean_reduction() == pytest.approx(1546.0, rel=0.10)
    assert sw.elapsed < 120.0


def test_criterion_5_scm_reproduction_and_placebo():
    panel = load_german()

    def fit(p):
        return scm.predict_counterfactual(scm.fit_weights(p, 0, "full"))

    with Stopwatch() as sw:
        est = fit(panel)
        result = inference.placebo_test(panel, fit)
    assert est.mean_reduction() == pytest.approx(1322.0, rel=0.15)
    assert result.r_treated == pytest.approx(30.72, rel=0.15)
    assert result.n_tested == 17
    assert result.rank == 17  # strictly the largest ratio of all units
    assert sw.elapsed < 120.0


def test_criterion_6_cim_reproduction():
    panel = load_german()
    spec = cim.BstsSpec(include_slope=False, iterations=10_000, burn_in=2_000)
    with Stopwatch() as sw:
        posterior = cim.fit_cim(panel, spec=spec)
        est = cim.estimate_effects(posterior)
    assert est.mean_reduction() == pytest.approx(1629.0, rel=0.15)
    assert not posterior.convergence_flag  # split-chain PSRF stayed below 1.2
    assert sw.elapsed < 300.0


def test_criterion_7_diagnostics_reproduction():
    panel = load_german()
    with Stopwatch() as sw:
        trend = did.parallel_trends_series(panel)
        hull = scm.convex_hull_check(panel)
    assert trend.slope > 0
    assert trend.p_value < 0.01
    assert hull.inside
    assert sw.elapsed < 1.0


def test_criterion_8_property_suites():
    with Stopwatch() as sw:
        _check_normal_equation_paths()
        _check_simplex_grid_oracle()
        _check_state_space_oracle()
        _check_unbiasedness()
        _check_bootstrap_coverage()
    assert sw.elapsed < 900.0


def _check_normal_equation_paths():
    # every least squares path agrees with a direct normal-equations solve
    rng = np.random.default_rng(0)

    # hcw: treated on [1, controls]
    C = rng.normal(size=(4, 16)) + 3.0
    y = 0.5 + np.array([0.3, 0.2, 0.4, 0.1]) @ C + 0.1 * rng.normal(size=16)
    panel = build_panel(np.vstack([C, y]), n1=4, T1=12)
    fit = hcw.fit_hcw(panel)
    X = np.column_stack([np.ones(12), C[:, :12].T])
    coef = oracles.normal_equations(X, y[:12])
    np.testing.assert_allclose([fit.intercept, *fit.beta], coef, atol=1e-8)

    # did: saturated two-way regression against the same design solved directly
    outcomes = rng.normal(size=(5, 8)) + 10.0
    panel = build_panel(outcomes, n1=4, T1=5)
    dfit = did.fit_did(panel)
    n, T, T1 = 5, 8, 5
    cols = [np.ones(n * T)]
    for i in range(1, n):
        u = np.zeros((n, T)); u[i] = 1.0
        cols.append(u.ravel())
    for t in range(1, T):
        v = np.zeros((n, T)); v[:, t] = 1.0
        cols.append(v.ravel())
    cells = [(4, t) for t in range(T1, T)]
    for (i, t) in cells:
        d = np.zeros((n, T)); d[i, t] = 1.0
        cols.append(d.ravel())
    beta = oracles.normal_equations(np.column_stack(cols), outcomes.ravel())
    np.testing.assert_allclose(dfit.tau.ravel(), beta[-len(cells):], atol=1e-8)

    # lfm rank-zero covariate regression on the two-way demeaned panel
    cov = rng.normal(size=(5, 10, 2))
    base = rng.normal(size=(5, 1)) + rng.normal(size=(1, 10))
    y2 = base + cov @ np.array([1.5, -0.5]) + 0.1 * rng.normal(size=(5, 10))
    panel2 = build_panel(y2, n1=4, T1=7, covariates=cov, covariate_labels=("a", "b"))
    lfit = lfm.fit_controls(panel2, 0)

    def demean(M):
        g = M.mean()
        return M - (M.mean(1, keepdims=True) - g) - (M.mean(0, keepdims=True) - g) - g

    Zx = np.column_stack([demean(cov[:4, :, k]).ravel() for k in range(2)])
    theta = oracles.normal_equations(Zx, demean(y2[:4]).ravel())
    np.testing.assert_allclose(lfit.theta, theta, atol=1e-8)


def _check_simplex_grid_oracle():
    # the weight solver's objective matches a brute-force simplex grid
    rng = np.random.default_rng(1)
    for m in (2, 3):
        for _ in range(6):
            A = rng.normal(size=(10, m))
            b = A @ rng.dirichlet(np.ones(m)) + 0.3 * rng.normal(size=10)
            sol = scm.simplex_lsq(A, b)
            f_solver = float(np.sum((A @ sol.w - b) ** 2))
            _, f_grid = oracles.simplex_grid_min(A, b)
            assert f_solver <= f_grid + 1e-12
            assert abs(f_solver - f_grid) <= 1e-6


def _check_state_space_oracle():
    # filter log likelihood and sampled state moments against exact
    # joint-normal conditioning, T <= 5
    ov, lv = 0.6, 0.5
    m0, P0 = np.array([1.0]), np.array([[2.0]])
    z = np.array([0.8, 1.6, 1.1, 2.3, 0.9])
    T = z.size
    mean_y, cov_yy, mean_a, cov_aa, cov_ya = oracles.state_space_joint(
        T, ov, lv, 0.0, False, m0, P0
    )
    filt = cim.kalman_filter(z, ov, lv, 0.0, False, m0, P0)
    assert filt.loglik == pytest.approx(
        oracles.gaussian_loglik(z, mean_y, cov_yy), abs=1e-8
    )

    smooth_mean, smooth_cov = oracles.gaussian_condition(
        mean_a, cov_aa, mean_y, cov_yy, cov_ya.T, z
    )
    B = 20_000
    rng = np.random.default_rng(2)
    draws = np.empty((B, T))
    for b in range(B):
        states, _ = cim.ffbs(rng, z, ov, lv, 0.0, False, m0, P0)
        draws[b] = states[:, 0]
    mc_se = draws.std(axis=0, ddof=1) / math.sqrt(B)
    np.testing.assert_array_less(
        np.abs(draws.mean(axis=0) - smooth_mean), 3 * mc_se
    )


def _check_unbiasedness():
    # each estimator is unbiased on the data generating family that matches
    # its identifying assumption
    did_report = sim.bias_experiment(
        sim.DgpSpec(
            family="parallel_trends", n1=8, T1=10, T2=4,
            effect_size=2.0, seed=10,
        ),
        lambda p: did.estimate_effects(did.fit_did(p)),
        replications=500,
    )
    assert abs(did_report.mean_bias) < 3 * did_report.mc_se

    hcw_report = sim.bias_experiment(
        sim.DgpSpec(
            family="hcw_span", n1=5, J=3, T1=40, T2=5,
            effect_size=2.0, noise_sd=1.0, seed=11,
        ),
        lambda p: hcw.estimate_effects(hcw.fit_hcw(p)),
        replications=500,
    )
    assert abs(hcw_report.mean_bias) < 3 * hcw_report.mc_se

    lfm_report = sim.bias_experiment(
        sim.DgpSpec(
            family="lfm", n1=40, T1=40, T2=10, J=2,
            effect_size=2.0, noise_sd=1.0, seed=12,
        ),
        lambda p: lfm.estimate_effects_xu(p, J=2, fe=()),
        replications=200,
    )
    assert abs(lfm_report.mean_bias) < 3 * lfm_report.mc_se


def _check_bootstrap_coverage():
    # parametric bootstrap bands at nominal 95% must cover the true effect
    # between 90% and 99% of the time
    report = sim.bias_experiment(
        sim.DgpSpec(
            family="lfm", n1=12, T1=12, T2=4, J=1,
            effect_size=2.0, noise_sd=1.0, seed=13,
        ),
        lambda p: lfm.estimate_effects_xu(p, J=1, fe=(), bootstrap=500, level=0.95),
        replications=200,
    )
    assert 0.90 <= report.coverage <= 0.99


def test_criterion_9_determinism(tmp_path, monkeypatch):
    # every seeded command writes byte-identical artifacts on a rerun; the
    # two runs use the same relative --out because summary.txt echoes the
    # configuration, paths included
    rng = np.random.default_rng(3)
    T1, T2 = 12, 4
    C = rng.normal(size=(4, T1 + T2)) + 10.0
    y = 0.4 * C[0] + 0.6 * C[1] + 0.05 * rng.normal(size=T1 + T2)
    y[T1:] += 3.0
    csv = tmp_path / "panel.csv"
    lines = ["unit,time,outcome"]
    for i, u in enumerate(["a", "b", "c", "d", "t"]):
        row = np.vstack([C, y])[i]
        for t in range(T1 + T2):
            lines.append(f"{u},{2000 + t},{float(row[t])!r}")
    csv.write_text("\n".join(lines) + "\n")
    common = ["--data", str(csv), "--treated", "t", "--t1", str(2000 + T1 - 1),
              "--out", "artifacts"]

    commands = {
        "est_cim": ["estimate", "--method", "cim", "--iters", "400", "--burn",
                    "100", "--seed", "7", "--draws-csv", *common],
        "est_lfm": ["estimate", "--method", "lfm", "--factors", "1",
                    "--bootstrap", "60", "--level", "0.9", "--seed", "7", *common],
        "est_scm": ["estimate", "--method", "scm", "--seed", "7", *common],
        "placebo": ["placebo", "--method", "hcw", "--threads", "2",
                    "--seed", "7", *common],
        "simulate": ["simulate", "--dgp", "parallel_trends", "--estimator",
                     "did", "--reps", "40", "--seed", "7", "--out", "artifacts"],
    }
    for name, argv in commands.items():
        digests = []
        for run in ("r1", "r2"):
            cwd = tmp_path / name / run
            cwd.mkdir(parents=True)
            monkeypatch.chdir(cwd)
            assert main(list(argv)) == 0, name
            digests.append(
                {p.name: p.read_bytes() for p in sorted((cwd / "artifacts").iterdir())}
            )
        assert digests[0].keys() == digests[1].keys(), name
        for fname in digests[0]:
            assert digests[0][fname] == digests[1][fname], f"{name}/{fname}"
