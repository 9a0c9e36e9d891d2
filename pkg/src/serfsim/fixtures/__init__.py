"""Bundled data: published quantile-regression coefficients and a synthetic trial.

The raw strawberry trial data are not public. ``synthetic_dataset`` builds a
stand-in with the same shape (2 seasons x 24 harvests x 4 treatments x 4
replicates), yields generated from the median-quantile coefficients plus
noise, per-season spraying costs taken from the published descriptive table,
and a Control replicate-season that loses money.
"""

from __future__ import annotations

import csv
import math
from importlib import resources
from pathlib import Path

import numpy as np

from ..data import CostSchedule, HarvestRecord, TrialDataset, build_dataset, write_dataset
from ..quantreg import QuantileModel

TREATMENTS = ("Control", "Fracture", "Milstop", "Serenade")
SEASONS = ("2014-15", "2015-16")
N_HARVESTS = 24
N_REPLICATES = 4
FIXTURE_SEED = 20150101

# (season 1, season 2) spraying cost per plot, USD
SPRAYING_COST = {
    "Control": (0.0, 0.0),
    "Fracture": (1642.3, 1912.6),
    "Milstop": (2168.3, 2525.2),
    "Serenade": (2114.8, 2462.9),
}
# (low, high, mean) of the per-harvest price path, USD per lb
PRICE_SHAPE = {"2014-15": (6.9, 27.9, 14.0), "2015-16": (10.2, 31.4, 22.8)}
BII_LEVEL = {"2014-15": 0.55, "2015-16": 0.30}
CONTROL_MEAN_PROFIT = 5869.6
# treatment contrasts are damped so yield distributions overlap as in the trial
TREATMENT_SHRINK = 0.25
PLOT_EFFECT_SD = 10.0
# scale of the centred gamma harvest shock; unsprayed plots are the most variable
SHOCK_SCALE = {"Control": 60.0, "Fracture": 45.0, "Milstop": 45.0, "Serenade": 40.0}


def data_dir() -> Path:
    return Path(str(resources.files(__name__)))


def fixture_paths() -> tuple[Path, Path, Path]:
    d = data_dir()
    return d / "trials.csv", d / "costs.csv", d / "bii.csv"


def load_fixture() -> TrialDataset:
    from ..data import load_dataset

    return load_dataset(*fixture_paths())


def published_path() -> Path:
    return data_dir() / "published_coefficients.csv"


def published_models(taus=None, path=None) -> list[QuantileModel]:
    """Published coefficients as models (no standard errors, no objective)."""
    with open(path or published_path(), newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    names = tuple(r[0] for r in body)
    models = []
    for col, label in enumerate(header[1:], start=1):
        tau = float(label.lstrip("q"))
        if taus is not None and not any(abs(tau - t) < 1e-9 for t in taus):
            continue
        models.append(QuantileModel(
            tau=tau,
            names=names,
            coefficients=np.array([float(r[col]) for r in body]),
        ))
    return models


def _price_path(season: str, rng: np.random.Generator) -> np.ndarray:
    lo, hi, mean = PRICE_SHAPE[season]
    n = np.arange(N_HARVESTS)
    # early-season premium decaying towards the floor; rate chosen to hit the mean
    frac = (mean - lo) / (hi - lo)
    rate = 0.01
    while np.mean(np.exp(-rate * n)) > frac:
        rate += 0.001
    path = lo + (hi - lo) * np.exp(-rate * n)
    path = path * np.exp(rng.normal(0.0, 0.04, size=N_HARVESTS))
    return np.round(np.clip(path, lo, hi), 2)


def synthetic_dataset(seed: int = FIXTURE_SEED) -> TrialDataset:
    rng = np.random.default_rng(seed)
    (median,) = published_models(taus=[0.5])
    times = {s: range(i * N_HARVESTS + 1, (i + 1) * N_HARVESTS + 1) for i, s in enumerate(SEASONS)}

    bii: dict[int, float] = {}
    for s in SEASONS:
        phase = rng.uniform(0, 2 * math.pi)
        for n, t in enumerate(times[s]):
            wave = 0.25 * math.sin(2 * math.pi * n / 12 + phase)
            bii[t] = round(float(np.clip(BII_LEVEL[s] + wave + rng.normal(0, 0.08), 0.0, 1.0)), 4)

    prices = {s: _price_path(s, rng) for s in SEASONS}

    records = []
    for tr in TREATMENTS:
        gamma = TREATMENT_SHRINK * median.coef(f"D_{tr}", 0.0)
        delta = TREATMENT_SHRINK * median.coef(f"t_x_{tr}", 0.0)
        for rep in range(1, N_REPLICATES + 1):
            plot_effect = rng.normal(0.0, PLOT_EFFECT_SD)
            prev = max(0.0, rng.normal(260.0, 60.0))
            for s in SEASONS:
                for n, t in enumerate(times[s], start=1):
                    mean = (median.coef("const") + gamma + plot_effect
                            + median.coef("yield_lag") * prev
                            + median.coef("bii") * bii[t]
                            + (median.coef("t") + delta) * t)
                    # right-skewed harvest noise
                    shock = rng.gamma(2.0, SHOCK_SCALE[tr]) - 2.0 * SHOCK_SCALE[tr]
                    y = round(max(0.0, mean + shock), 1)
                    records.append(HarvestRecord(s, tr, rep, n, t, y, float(prices[s][n - 1])))
                    prev = y

    # other costs are set so Control's mean profit matches the published table
    revenue = {}
    for r in records:
        if r.treatment == "Control":
            revenue[(r.season, r.replicate)] = revenue.get((r.season, r.replicate), 0.0) + r.price * r.yield_lb
    by_season = {s: np.mean([v for (ss, _), v in revenue.items() if ss == s]) for s in SEASONS}
    costs = {}
    for i, s in enumerate(SEASONS):
        other = round(float(by_season[s]) - CONTROL_MEAN_PROFIT, 2)
        for tr in TREATMENTS:
            costs[(s, tr)] = CostSchedule(s, tr, SPRAYING_COST[tr][i], other)
    return build_dataset(records, costs, bii)


def write_fixture(directory=None, seed: int = FIXTURE_SEED):
    return write_dataset(synthetic_dataset(seed), directory or data_dir())
