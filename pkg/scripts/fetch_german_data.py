#!/usr/bin/env python3
"""Fetch the West German reunification panel and vendor it under data/.

Requires network access to dataverse.harvard.edu, so run it on a connected
machine and commit the CSV it writes. The source is the public replication
archive doi:10.7910/DVN/24714, whose country-year table carries annual per
capita GDP (PPP, 2002 USD) for West Germany and 16 OECD donor countries,
1960 through 2003. Only the unit, time, and outcome columns are kept; the
output is the long-format CSV that causalpanel.panel.load_csv expects:

    unit,time,outcome
    USA,1960,2914.0
    ...

The archive layout is outside our control, so everything is re-checked
after download: the table must contain the three expected columns, a
complete 17 x 44 grid, and West Germany itself. A failed check aborts
without writing anything.
"""

import argparse
import io
import json
import sys
import urllib.error
import urllib.parse
import urllib.request
from pathlib import Path

import pandas as pd

API = "https://dataverse.harvard.edu/api"
DOI = "doi:10.7910/DVN/24714"
UNIT_COL = "country"
TIME_COL = "year"
OUTCOME_COL = "gdp"
TREATED = "West Germany"
YEARS = range(1960, 2004)
N_UNITS = 17


def _get(url: str) -> bytes:
    req = urllib.request.Request(url, headers={"User-Agent": "causalpanel/0.1"})
    with urllib.request.urlopen(req, timeout=120) as resp:
        return resp.read()


def locate_table(doi: str) -> tuple[int, str]:
    """Return (file id, filename) of the country-year table in the archive."""
    url = f"{API}/datasets/:persistentId?persistentId={urllib.parse.quote(doi)}"
    meta = json.loads(_get(url))
    files = meta["data"]["latestVersion"]["files"]
    for entry in files:
        df = entry["dataFile"]
        name = df.get("filename", "")
        if name.lower().startswith("repgermany"):
            return df["id"], name
    listing = ", ".join(e["dataFile"].get("filename", "?") for e in files)
    sys.exit(f"no repgermany table found in {doi}; the archive holds: {listing}")


def read_table(file_id: int, filename: str) -> pd.DataFrame:
    """Download the original file and parse it by extension."""
    raw = _get(f"{API}/access/datafile/{file_id}?format=original")
    suffix = Path(filename).suffix.lower()
    if suffix == ".dta":
        return pd.read_stata(io.BytesIO(raw))
    if suffix in (".csv", ".tab", ".tsv"):
        sep = "," if suffix == ".csv" else "\t"
        return pd.read_csv(io.BytesIO(raw), sep=sep)
    sys.exit(f"cannot parse {filename}: expected a .dta, .csv, or .tab table")


def normalize(table: pd.DataFrame) -> pd.DataFrame:
    missing = {UNIT_COL, TIME_COL, OUTCOME_COL} - set(table.columns)
    if missing:
        sys.exit(
            f"table is missing column(s) {sorted(missing)}; "
            f"it has: {list(table.columns)}"
        )
    out = table[[UNIT_COL, TIME_COL, OUTCOME_COL]].copy()
    out.columns = ["unit", "time", "outcome"]
    out["unit"] = out["unit"].astype(str).str.strip()
    out["time"] = out["time"].astype(int)
    out = out[out["time"].isin(YEARS)]

    units = list(dict.fromkeys(out["unit"]))
    if len(units) != N_UNITS:
        sys.exit(f"expected {N_UNITS} countries, found {len(units)}: {units}")
    if TREATED not in units:
        sys.exit(f"treated unit {TREATED!r} not among: {units}")
    if out["outcome"].isna().any():
        bad = out[out["outcome"].isna()][["unit", "time"]].to_records(index=False)
        sys.exit(f"missing outcome values at: {list(bad)}")
    counts = out.groupby("unit")["time"].nunique()
    short = counts[counts != len(YEARS)]
    if not short.empty:
        sys.exit(f"incomplete series (need {len(YEARS)} years): {dict(short)}")

    # keep the archive's country order, years ascending within each country
    out["unit"] = pd.Categorical(out["unit"], categories=units, ordered=True)
    return out.sort_values(["unit", "time"]).reset_index(drop=True)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument(
        "--out",
        default=str(Path(__file__).resolve().parent.parent
                    / "data" / "german_reunification.csv"),
        help="destination CSV path",
    )
    args = parser.parse_args(argv)

    try:
        file_id, filename = locate_table(DOI)
        print(f"downloading {filename} (file id {file_id}) from {DOI}")
        table = normalize(read_table(file_id, filename))
    except (urllib.error.URLError, OSError, TimeoutError) as exc:
        sys.exit(f"could not reach dataverse.harvard.edu ({exc}); this "
                 "script needs network access, run it on a connected machine")

    dest = Path(args.out)
    dest.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(dest, index=False)
    print(f"wrote {len(table)} rows ({N_UNITS} countries x {len(YEARS)} years) "
          f"to {dest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
