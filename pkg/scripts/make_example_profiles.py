"""Generate the synthetic example profiles under data/profiles/.

Two commercial load shapes for 2019 in America/Los_Angeles at hourly
resolution, plus a PV output profile per kW of installed capacity:

* ``mep_load.csv``: morning-and-evening peaking, annual max 220.9 kW
* ``mdp_load.csv``: midday peaking, annual max 326.5 kW
* ``pv_unit.csv``: kW per kW-installed, annual max exactly 1.0

The shapes are stylized and seeded, so reruns are byte-identical.

    python scripts/make_example_profiles.py [OUTDIR]
"""

import sys
from pathlib import Path

import numpy as np

from touopt.profiles import DEMAND_COLUMN, PV_UNIT_COLUMN, TimeGrid, write_profile_csv

YEAR = 2019
TZ = "America/Los_Angeles"
SEED = 20190101


def _bump(hour, center, width):
    return np.exp(-0.5 * ((hour - center) / width) ** 2)


def _calendar(grid):
    idx = grid.index
    hour = idx.hour.to_numpy() + idx.minute.to_numpy() / 60.0
    doy = idx.dayofyear.to_numpy()
    weekend = idx.dayofweek.to_numpy() >= 5
    # 1 in mid-July, -1 in mid-January
    season = -np.cos(2 * np.pi * (doy - 15) / 365.0)
    return hour, doy, weekend, season


def mep_load(grid, rng):
    hour, _, weekend, season = _calendar(grid)
    shape = 0.35 + 0.55 * _bump(hour, 8.0, 1.3) + 0.75 * _bump(hour, 19.0, 1.6) + 0.12 * _bump(hour, 13.0, 3.0)
    shape *= np.where(weekend, 0.8, 1.0)
    shape *= 1.0 + 0.12 * season
    shape *= 1.0 + 0.04 * rng.standard_normal(grid.count)
    return 220.9 * shape / shape.max()


def mdp_load(grid, rng):
    hour, _, weekend, season = _calendar(grid)
    shape = 0.25 + 0.85 * _bump(hour, 13.5, 2.4) + 0.1 * _bump(hour, 8.0, 1.5)
    shape *= np.where(weekend, 0.55, 1.0)
    shape *= 1.0 + 0.2 * season
    shape *= 1.0 + 0.04 * rng.standard_normal(grid.count)
    return 326.5 * shape / shape.max()


def pv_unit(grid, rng):
    hour, doy, _, season = _calendar(grid)
    day_length = 12.0 + 2.4 * season  # hours of daylight
    sunrise = 12.5 - day_length / 2  # solar noon near 12:30 local
    phase = (hour + 0.5 - sunrise) / day_length
    clear = np.where((phase > 0) & (phase < 1), np.sin(np.pi * np.clip(phase, 0, 1)) ** 1.3, 0.0)
    clear *= 0.78 + 0.17 * season
    days = np.unique(doy)
    cloud = dict(zip(days, np.clip(1.0 - rng.gamma(0.6, 0.25, days.size), 0.15, 1.0)))
    out = clear * np.array([cloud[d] for d in doy])
    return out / out.max()


def main(outdir):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    grid = TimeGrid.for_year(YEAR, TZ, 60)
    rng = np.random.default_rng(SEED)
    write_profile_csv(outdir / "mep_load.csv", grid, np.round(mep_load(grid, rng), 3), DEMAND_COLUMN)
    write_profile_csv(outdir / "mdp_load.csv", grid, np.round(mdp_load(grid, rng), 3), DEMAND_COLUMN)
    write_profile_csv(outdir / "pv_unit.csv", grid, np.round(pv_unit(grid, rng), 5), PV_UNIT_COLUMN)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "data" / "profiles")
