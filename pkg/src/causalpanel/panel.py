"""Balanced-panel container and CSV ingestion.

The whole package works on one data structure: a balanced panel of ``n``
units observed over ``T`` ordered time points, where the first ``n1`` units
are never treated and the remaining ``n - n1`` units are all treated from
period ``T1 + 1`` onward (simultaneous adoption, treatment stays on).
Outcomes are a dense float matrix; optional covariates ride along as a
third axis. Missing cells are a validation error, not a feature.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import (
    DuplicateRow,
    IncompletePanel,
    InvalidStructure,
    ParseError,
)

DEFAULT_SCHEMA = {"unit": "unit", "time": "time", "outcome": "outcome"}


@dataclass(frozen=True)
class PanelDataset:
    """A balanced outcome panel with a block treatment pattern.

    Parameters
    ----------
    outcomes : np.ndarray
        Shape (n, T). Row i is unit i's outcome path. Rows 0..n1-1 are
        controls, the rest are treated.
    n1 : int
        Number of control units. Must satisfy 1 <= n1 < n.
    T1 : int
        Number of pre-intervention periods. Must satisfy 1 <= T1 < T.
        Point estimation works from a single pre period; anything that
        needs a variance wants more.
    unit_labels : tuple of str
        Length n, unique.
    time_labels : tuple
        Length T, unique, in ascending panel order.
    covariates : np.ndarray or None
        Shape (n, T, K) when present.
    covariate_labels : tuple of str
        Length K; empty when covariates is None.
    """

    outcomes: np.ndarray
    n1: int
    T1: int
    unit_labels: tuple
    time_labels: tuple
    covariates: np.ndarray | None = None
    covariate_labels: tuple = field(default=())

    def __post_init__(self):
        y = np.asarray(self.outcomes, dtype=float)
        if y.ndim != 2:
            raise InvalidStructure(f"outcomes must be 2-d, got shape {y.shape}")
        n, T = y.shape
        if not (1 <= self.n1 < n):
            raise InvalidStructure(
                f"need 1 <= n1 < n, got n1={self.n1} with n={n}"
            )
        if not (1 <= self.T1 < T):
            raise InvalidStructure(
                f"need 1 <= T1 < T, got T1={self.T1} with T={T}"
            )
        if len(self.unit_labels) != n:
            raise InvalidStructure("unit_labels length does not match outcomes")
        if len(self.time_labels) != T:
            raise InvalidStructure("time_labels length does not match outcomes")
        if len(set(self.unit_labels)) != n:
            raise InvalidStructure("unit labels must be unique")
        if len(set(self.time_labels)) != T:
            raise InvalidStructure("time labels must be unique")
        if not np.all(np.isfinite(y)):
            bad = np.argwhere(~np.isfinite(y))[0]
            raise IncompletePanel(
                "outcome missing or non-finite at unit "
                f"{self.unit_labels[bad[0]]!r}, time {self.time_labels[bad[1]]!r}"
            )
        y.setflags(write=False)
        object.__setattr__(self, "outcomes", y)
        object.__setattr__(self, "unit_labels", tuple(self.unit_labels))
        object.__setattr__(self, "time_labels", tuple(self.time_labels))
        if self.covariates is not None:
            x = np.asarray(self.covariates, dtype=float)
            if x.ndim != 3 or x.shape[:2] != (n, T):
                raise InvalidStructure(
                    f"covariates must have shape (n, T, K), got {x.shape}"
                )
            if len(self.covariate_labels) != x.shape[2]:
                raise InvalidStructure(
                    "covariate_labels length does not match covariate axis"
                )
            if not np.all(np.isfinite(x)):
                raise IncompletePanel("covariates contain missing or non-finite values")
            x.setflags(write=False)
            object.__setattr__(self, "covariates", x)
        object.__setattr__(self, "covariate_labels", tuple(self.covariate_labels))

    @property
    def n(self) -> int:
        return self.outcomes.shape[0]

    @property
    def T(self) -> int:
        return self.outcomes.shape[1]

    @property
    def n2(self) -> int:
        """Number of treated units."""
        return self.n - self.n1

    @property
    def T2(self) -> int:
        """Number of post-intervention periods."""
        return self.T - self.T1

    @property
    def control_outcomes(self) -> np.ndarray:
        """(n1, T) view of the control block."""
        return self.outcomes[: self.n1]

    @property
    def treated_outcomes(self) -> np.ndarray:
        """(n2, T) view of the treated block."""
        return self.outcomes[self.n1 :]

    @property
    def treated_labels(self) -> tuple:
        return self.unit_labels[self.n1 :]

    @property
    def control_labels(self) -> tuple:
        return self.unit_labels[: self.n1]

    @property
    def pre_times(self) -> tuple:
        return self.time_labels[: self.T1]

    @property
    def post_times(self) -> tuple:
        return self.time_labels[self.T1 :]

    def is_treated_cell(self, i: int, t: int) -> bool:
        """Treatment indicator for 0-based panel coordinates."""
        return i >= self.n1 and t >= self.T1

    def replace_outcomes(self, outcomes: np.ndarray) -> "PanelDataset":
        """Same panel layout with a new outcome matrix."""
        return PanelDataset(
            outcomes=np.array(outcomes, dtype=float),
            n1=self.n1,
            T1=self.T1,
            unit_labels=self.unit_labels,
            time_labels=self.time_labels,
            covariates=None if self.covariates is None else np.array(self.covariates),
            covariate_labels=self.covariate_labels,
        )


def _coerce_time(values: Iterable) -> list:
    """Parse time labels as integers, then floats, else keep strings."""
    vals = list(values)
    for cast in (int, float):
        try:
            return [cast(v) for v in vals]
        except (TypeError, ValueError):
            continue
    return [str(v) for v in vals]


def load_csv(
    path,
    schema: Mapping[str, object] | None = None,
    *,
    treated: Sequence[str],
    t1=None,
    T1: int | None = None,
) -> PanelDataset:
    """Read a long-format CSV into a :class:`PanelDataset`.

    Parameters
    ----------
    path : str or Path
        CSV file with one row per (unit, time) observation.
    schema : mapping, optional
        Column names: keys ``unit``, ``time``, ``outcome`` and optionally
        ``covariates`` (a list of column names). Defaults to
        ``{"unit": "unit", "time": "time", "outcome": "outcome"}``.
    treated : sequence of str
        Unit labels that receive the intervention. Everything else is a
        control. Controls keep file order and come first; treated units are
        moved to the back, also in file order.
    t1 : time label, optional
        Label of the LAST pre-intervention period. Mutually exclusive
        with ``T1``.
    T1 : int, optional
        Number of pre-intervention periods, as a plain count.

    Raises
    ------
    ParseError, DuplicateRow, IncompletePanel, InvalidStructure
        Per the validation rules; messages name the offending cell.
    """
    schema = dict(DEFAULT_SCHEMA if schema is None else schema)
    unit_col = schema.get("unit", "unit")
    time_col = schema.get("time", "time")
    outcome_col = schema.get("outcome", "outcome")
    covariate_cols = list(schema.get("covariates", []) or [])

    try:
        # round_trip parsing keeps save_csv -> load_csv bit-exact
        frame = pd.read_csv(path, dtype={unit_col: str}, float_precision="round_trip")
    except FileNotFoundError:
        raise
    except Exception as exc:  # malformed CSV
        raise ParseError(f"could not read {path}: {exc}") from exc

    for col in [unit_col, time_col, outcome_col, *covariate_cols]:
        if col not in frame.columns:
            raise ParseError(f"column {col!r} not found in {path}")

    for col in [outcome_col, *covariate_cols]:
        coerced = pd.to_numeric(frame[col], errors="coerce")
        bad = coerced.isna() & frame[col].notna()
        if bad.any():
            row = frame.loc[bad].iloc[0]
            raise ParseError(
                f"non-numeric value {row[col]!r} in column {col!r} at unit "
                f"{row[unit_col]!r}, time {row[time_col]!r}"
            )
        frame[col] = coerced

    dup = frame.duplicated(subset=[unit_col, time_col], keep=False)
    if dup.any():
        row = frame.loc[dup].iloc[0]
        raise DuplicateRow(
            f"duplicate observation for unit {row[unit_col]!r}, "
            f"time {row[time_col]!r}"
        )

    units_in_order = list(dict.fromkeys(frame[unit_col]))
    raw_times = list(dict.fromkeys(frame[time_col]))
    times = sorted(set(_coerce_time(raw_times)))
    time_key = {lab: k for k, lab in enumerate(times)}
    frame["_t"] = _coerce_time(frame[time_col])

    n, T = len(units_in_order), len(times)
    expected = n * T
    if len(frame) != expected:
        counts = frame.groupby(unit_col, sort=False)["_t"].apply(set)
        for unit, seen in counts.items():
            missing = [lab for lab in times if lab not in seen]
            if missing:
                raise IncompletePanel(
                    f"unit {unit!r} is missing time(s) {missing[:5]!r}"
                    + (" ..." if len(missing) > 5 else "")
                )
        raise IncompletePanel(
            f"expected {expected} rows for a balanced panel, found {len(frame)}"
        )

    treated = [str(u) for u in treated]
    seen_units = set(units_in_order)
    for lab in treated:
        if lab not in seen_units:
            raise InvalidStructure(f"treated unit {lab!r} not present in the data")
    if len(set(treated)) != len(treated):
        raise InvalidStructure("treated unit labels must be unique")
    controls = [u for u in units_in_order if u not in set(treated)]
    ordered_units = controls + [u for u in units_in_order if u in set(treated)]
    n1 = len(controls)

    if (t1 is None) == (T1 is None):
        raise InvalidStructure("provide exactly one of t1 (label) or T1 (count)")
    if t1 is not None:
        t1_coerced = _coerce_time([t1])[0]
        if t1_coerced not in time_key:
            raise InvalidStructure(f"t1 label {t1!r} not among the time labels")
        T1 = time_key[t1_coerced] + 1

    unit_key = {lab: k for k, lab in enumerate(ordered_units)}
    y = np.empty((n, T), dtype=float)
    rows = frame[unit_col].map(unit_key).to_numpy()
    cols = frame["_t"].map(time_key).to_numpy()
    y[rows, cols] = frame[outcome_col].to_numpy(dtype=float)

    covariates = None
    if covariate_cols:
        covariates = np.empty((n, T, len(covariate_cols)), dtype=float)
        for k, col in enumerate(covariate_cols):
            covariates[rows, cols, k] = frame[col].to_numpy(dtype=float)

    return PanelDataset(
        outcomes=y,
        n1=n1,
        T1=T1,
        unit_labels=tuple(ordered_units),
        time_labels=tuple(times),
        covariates=covariates,
        covariate_labels=tuple(covariate_cols),
    )


def save_csv(panel: PanelDataset, path) -> None:
    """Write a panel back to long-format CSV.

    Rows are ordered unit-major (controls first, file order preserved),
    times ascending. Floats are written with ``repr`` so a reload
    reproduces the matrix bit for bit.
    """
    cov_labels = list(panel.covariate_labels)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["unit", "time", "outcome", *cov_labels])
        for i, unit in enumerate(panel.unit_labels):
            for t, time in enumerate(panel.time_labels):
                row = [unit, time, repr(float(panel.outcomes[i, t]))]
                if panel.covariates is not None:
                    row += [repr(float(v)) for v in panel.covariates[i, t]]
                writer.writerow(row)


def split_pre_post(panel: PanelDataset, unit: int):
    """Return (pre, post) outcome series for one unit (0-based row index).

    Views on the outcome matrix with shapes (T1,) and (T2,);
    ``np.concatenate([pre, post])`` reproduces the unit's full path.
    """
    if not 0 <= unit < panel.n:
        raise InvalidStructure(f"unit index {unit} out of range for n={panel.n}")
    row = panel.outcomes[unit]
    return row[: panel.T1], row[panel.T1 :]


def treated_average(panel: PanelDataset) -> PanelDataset:
    """Collapse all treated units into their pointwise average.

    Returns a new panel with the same controls and a single synthetic
    treated unit labeled ``avg(<label1>,<label2>,...)``. Covariates are
    averaged the same way. Useful as the pooling route when several units
    adopt the intervention at once.
    """
    if panel.n2 == 1:
        return panel
    avg = panel.treated_outcomes.mean(axis=0, keepdims=True)
    y = np.vstack([panel.control_outcomes, avg])
    label = "avg(" + ",".join(str(u) for u in panel.treated_labels) + ")"
    covariates = None
    if panel.covariates is not None:
        cov_avg = panel.covariates[panel.n1 :].mean(axis=0, keepdims=True)
        covariates = np.concatenate([panel.covariates[: panel.n1], cov_avg], axis=0)
    return PanelDataset(
        outcomes=y,
        n1=panel.n1,
        T1=panel.T1,
        unit_labels=(*panel.control_labels, label),
        time_labels=panel.time_labels,
        covariates=covariates,
        covariate_labels=panel.covariate_labels,
    )


def single_treated(panel: PanelDataset, j: int) -> PanelDataset:
    """Restrict the panel to all controls plus the j-th treated unit (0-based)."""
    if not 0 <= j < panel.n2:
        raise InvalidStructure(f"treated index {j} out of range for n2={panel.n2}")
    idx = list(range(panel.n1)) + [panel.n1 + j]
    return PanelDataset(
        outcomes=panel.outcomes[idx].copy(),
        n1=panel.n1,
        T1=panel.T1,
        unit_labels=tuple(panel.unit_labels[i] for i in idx),
        time_labels=panel.time_labels,
        covariates=None if panel.covariates is None else panel.covariates[idx].copy(),
        covariate_labels=panel.covariate_labels,
    )


def pseudo_treated(panel: PanelDataset, j: int) -> PanelDataset:
    """Recast control j as the sole treated unit, dropping the real treated block.

    The donor pool becomes the remaining n1 - 1 controls. Used by the
    placebo machinery.
    """
    if not 0 <= j < panel.n1:
        raise InvalidStructure(f"control index {j} out of range for n1={panel.n1}")
    keep = [i for i in range(panel.n1) if i != j] + [j]
    return PanelDataset(
        outcomes=panel.outcomes[keep].copy(),
        n1=panel.n1 - 1,
        T1=panel.T1,
        unit_labels=tuple(panel.unit_labels[i] for i in keep),
        time_labels=panel.time_labels,
        covariates=None if panel.covariates is None else panel.covariates[keep].copy(),
        covariate_labels=panel.covariate_labels,
    )
