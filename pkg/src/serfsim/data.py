"""Loading and validation of harvest-level field trial data.

Three CSV files make up a trial:

* ``trials.csv``  -- ``season,treatment,replicate,harvest_index,global_time,yield_lb,price_usd_per_lb``
* ``costs.csv``   -- ``season,treatment,spraying_cost_usd,other_cost_usd``
* ``bii.csv``     -- ``global_time,bii``

BII values must already be aggregated to harvest dates (one value per
``global_time``); no calendar arithmetic happens here.
"""

from __future__ import annotations

import csv
import math
import os
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BiiOutOfRange,
    DuplicateKey,
    InconsistentTime,
    InvalidValue,
    MissingBii,
    MissingColumn,
    MissingCost,
    MissingValue,
    NonNumericField,
    UnbalancedPanel,
)

TRIALS_COLUMNS = (
    "season",
    "treatment",
    "replicate",
    "harvest_index",
    "global_time",
    "yield_lb",
    "price_usd_per_lb",
)
COSTS_COLUMNS = ("season", "treatment", "spraying_cost_usd", "other_cost_usd")
BII_COLUMNS = ("global_time", "bii")

DEFAULT_CONTROL = "Control"


@dataclass(frozen=True, order=True)
class HarvestRecord:
    season: str
    treatment: str
    replicate: int
    harvest_index: int
    global_time: int
    yield_lb: float
    price: float


@dataclass(frozen=True)
class CostSchedule:
    season: str
    treatment: str
    spraying_cost: float
    other_cost: float

    @property
    def total_cost(self) -> float:
        return self.spraying_cost + self.other_cost


@dataclass(frozen=True)
class BiiSeries:
    entries: dict[int, float]

    def __getitem__(self, t: int) -> float:
        return self.entries[t]

    def __contains__(self, t: object) -> bool:
        return t in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def values_at(self, times: Iterable[int]) -> np.ndarray:
        return np.array([self.entries[int(t)] for t in times], dtype=float)


@dataclass(frozen=True)
class TrialDataset:
    """A validated, balanced harvest panel.

    ``records`` are stored in canonical order (season, treatment, replicate,
    harvest), with seasons ordered by time and treatments ordered control
    first, so two datasets built from permuted files compare equal.
    """

    records: tuple[HarvestRecord, ...]
    costs: dict[tuple[str, str], CostSchedule]
    bii: BiiSeries
    treatments: tuple[str, ...]
    seasons: tuple[str, ...]
    replicates: tuple[int, ...] = field(default=())

    @property
    def control(self) -> str:
        return self.treatments[0]

    @property
    def harvests_per_season(self) -> dict[str, int]:
        out: dict[str, set[int]] = defaultdict(set)
        for r in self.records:
            out[r.season].add(r.harvest_index)
        return {s: len(out[s]) for s in self.seasons}

    @property
    def last_time(self) -> int:
        return max(r.global_time for r in self.records)

    def cost(self, season: str, treatment: str) -> CostSchedule:
        try:
            return self.costs[(season, treatment)]
        except KeyError:
            raise MissingCost(f"no cost schedule for season={season!r} treatment={treatment!r}") from None

    def chain(self, treatment: str, replicate: int, season: str | None = None) -> list[HarvestRecord]:
        """Records of one replicate plot ordered by time, optionally one season only."""
        out = [
            r for r in self.records
            if r.treatment == treatment and r.replicate == replicate
            and (season is None or r.season == season)
        ]
        out.sort(key=lambda r: r.global_time)
        return out

    def select(self, *, season: str | None = None, treatment: str | None = None) -> list[HarvestRecord]:
        return [
            r for r in self.records
            if (season is None or r.season == season)
            and (treatment is None or r.treatment == treatment)
        ]


# -- parsing ------------------------------------------------------------------

def _read_rows(path: str | os.PathLike, required: Sequence[str]) -> list[tuple[int, dict[str, str]]]:
    name = os.fspath(path)
    with open(name, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        for col in required:
            if col not in header:
                raise MissingColumn(f"{name}: missing column {col!r} (header: {','.join(header)})")
        reader.fieldnames = header
        rows = []
        for row in reader:
            # line_num points at the last physical line read
            rows.append((reader.line_num, {k: (v or "").strip() for k, v in row.items() if k is not None}))
    return rows


class _RowParser:
    def __init__(self, path, line: int, row: dict[str, str]):
        self.where = f"{os.fspath(path)}:{line}"
        self.row = row

    def text(self, col: str) -> str:
        value = self.row.get(col, "")
        if value == "":
            raise MissingValue(f"{self.where}: empty field {col!r}")
        return value

    def integer(self, col: str) -> int:
        value = self.text(col)
        try:
            return int(value)
        except ValueError:
            raise NonNumericField(f"{self.where}: field {col!r} is not an integer: {value!r}") from None

    def number(self, col: str) -> float:
        value = self.text(col)
        try:
            out = float(value)
        except ValueError:
            out = math.nan
        if not math.isfinite(out):
            raise NonNumericField(f"{self.where}: field {col!r} is not a finite number: {value!r}")
        return out

    def check(self, ok: bool, col: str, what: str) -> None:
        if not ok:
            raise InvalidValue(f"{self.where}: field {col!r}={self.row.get(col)!r} {what}")


def _parse_trials(path) -> list[tuple[str, HarvestRecord]]:
    out = []
    seen: dict[tuple, str] = {}
    for line, row in _read_rows(path, TRIALS_COLUMNS):
        p = _RowParser(path, line, row)
        rec = HarvestRecord(
            season=p.text("season"),
            treatment=p.text("treatment"),
            replicate=p.integer("replicate"),
            harvest_index=p.integer("harvest_index"),
            global_time=p.integer("global_time"),
            yield_lb=p.number("yield_lb"),
            price=p.number("price_usd_per_lb"),
        )
        p.check(rec.replicate >= 1, "replicate", "must be a positive integer")
        p.check(rec.harvest_index >= 1, "harvest_index", "must be a positive integer")
        p.check(rec.global_time >= 1, "global_time", "must be a positive integer")
        p.check(rec.yield_lb >= 0, "yield_lb", "must be >= 0")
        p.check(rec.price > 0, "price_usd_per_lb", "must be > 0")
        key = (rec.season, rec.treatment, rec.replicate, rec.harvest_index)
        if key in seen:
            raise DuplicateKey(
                f"{p.where}: duplicate (season, treatment, replicate, harvest_index)={key}, first seen at {seen[key]}"
            )
        seen[key] = p.where
        out.append((p.where, rec))
    return out


def _parse_costs(path) -> dict[tuple[str, str], CostSchedule]:
    out: dict[tuple[str, str], CostSchedule] = {}
    where: dict[tuple[str, str], str] = {}
    for line, row in _read_rows(path, COSTS_COLUMNS):
        p = _RowParser(path, line, row)
        cs = CostSchedule(
            season=p.text("season"),
            treatment=p.text("treatment"),
            spraying_cost=p.number("spraying_cost_usd"),
            other_cost=p.number("other_cost_usd"),
        )
        p.check(cs.spraying_cost >= 0, "spraying_cost_usd", "must be >= 0")
        p.check(cs.other_cost >= 0, "other_cost_usd", "must be >= 0")
        key = (cs.season, cs.treatment)
        if key in out:
            raise DuplicateKey(f"{p.where}: duplicate cost row for (season, treatment)={key}, first seen at {where[key]}")
        out[key] = cs
        where[key] = p.where
    return out


def _parse_bii(path) -> dict[int, float]:
    out: dict[int, float] = {}
    for line, row in _read_rows(path, BII_COLUMNS):
        p = _RowParser(path, line, row)
        t = p.integer("global_time")
        value = p.number("bii")
        if t in out:
            raise DuplicateKey(f"{p.where}: duplicate BII entry for global_time={t}")
        if not 0.0 <= value <= 1.0:
            raise BiiOutOfRange(f"{p.where}: BII at global_time={t} is {value}, outside [0, 1]")
        out[t] = value
    return out


# -- validation ---------------------------------------------------------------

def _order_treatments(names: Iterable[str], control: str) -> tuple[str, ...]:
    names = sorted(set(names))
    if control in names:
        names.remove(control)
        return (control, *names)
    return tuple(names)


def build_dataset(
    records: Iterable[HarvestRecord],
    costs: dict[tuple[str, str], CostSchedule],
    bii: dict[int, float],
    control: str = DEFAULT_CONTROL,
    *,
    where: dict[HarvestRecord, str] | None = None,
) -> TrialDataset:
    """Validate already-parsed pieces and assemble a canonical :class:`TrialDataset`."""
    records = list(records)
    where = where or {}
    if not records:
        raise InvalidValue("trial data contain no records")

    def loc(rec: HarvestRecord) -> str:
        return where.get(rec, f"record {rec}")

    for t, value in bii.items():
        if not 0.0 <= value <= 1.0:
            raise BiiOutOfRange(f"BII at global_time={t} is {value}, outside [0, 1]")

    seen_keys: set[tuple] = set()
    for rec in records:
        key = (rec.season, rec.treatment, rec.replicate, rec.harvest_index)
        if key in seen_keys:
            raise DuplicateKey(f"{loc(rec)}: duplicate (season, treatment, replicate, harvest_index)={key}")
        seen_keys.add(key)

    treatments = _order_treatments((r.treatment for r in records), control)

    for rec in records:
        if (rec.season, rec.treatment) not in costs:
            raise MissingCost(
                f"{loc(rec)}: no cost row for season={rec.season!r} treatment={rec.treatment!r}"
            )
    for (season, treatment), cs in costs.items():
        if treatment == control and cs.spraying_cost != 0:
            raise InvalidValue(
                f"control treatment {control!r} has non-zero spraying cost {cs.spraying_cost} in season {season!r}"
            )

    for rec in records:
        if rec.global_time not in bii:
            raise MissingBii(f"{loc(rec)}: no BII entry for global_time={rec.global_time}")

    # one global_time per calendar harvest, distinct across harvests
    time_of: dict[tuple[str, int], int] = {}
    harvest_of: dict[int, tuple[str, int]] = {}
    for rec in records:
        key = (rec.season, rec.harvest_index)
        t = time_of.setdefault(key, rec.global_time)
        if t != rec.global_time:
            raise InconsistentTime(
                f"{loc(rec)}: global_time={rec.global_time} but season={rec.season!r} "
                f"harvest_index={rec.harvest_index} already has global_time={t}"
            )
        other = harvest_of.setdefault(rec.global_time, key)
        if other != key:
            raise InconsistentTime(
                f"{loc(rec)}: global_time={rec.global_time} is shared by harvests {other} and {key}"
            )
    season_start = defaultdict(lambda: math.inf)
    for (season, _), t in time_of.items():
        season_start[season] = min(season_start[season], t)
    seasons = tuple(sorted(season_start, key=lambda s: (season_start[s], s)))
    rank = {s: i for i, s in enumerate(seasons)}
    by_time = sorted(time_of.items(), key=lambda kv: kv[1])
    for (prev, _), (cur, t) in zip(by_time, by_time[1:]):
        if (rank[cur[0]], cur[1]) <= (rank[prev[0]], prev[1]):
            raise InconsistentTime(
                f"global_time={t} (season={cur[0]!r}, harvest_index={cur[1]}) does not increase "
                f"with (season, harvest_index)"
            )

    # balanced panel
    chains: dict[str, dict[tuple[str, int], set[int]]] = defaultdict(lambda: defaultdict(set))
    for rec in records:
        chains[rec.season][(rec.treatment, rec.replicate)].add(rec.harvest_index)
    reference_units = None
    for season in seasons:
        units = chains[season]
        if reference_units is None:
            reference_units = set(units)
        elif set(units) != reference_units:
            diff = sorted(set(units) ^ reference_units)
            raise UnbalancedPanel(f"season {season!r}: (treatment, replicate) units differ from other seasons: {diff}")
        sets = {frozenset(h) for h in units.values()}
        if len(sets) != 1:
            largest = max(sets, key=len)
            bad = sorted(u for u, h in units.items() if frozenset(h) != largest)
            raise UnbalancedPanel(
                f"season {season!r}: harvest indices differ across (treatment, replicate) units; "
                f"e.g. {bad[:3]} lack some of {sorted(largest)[:5]}..."
            )
        (hset,) = sets
        if sorted(hset) != list(range(1, len(hset) + 1)):
            raise UnbalancedPanel(f"season {season!r}: harvest indices must run 1..N, got {sorted(hset)}")
    rep_sets = defaultdict(set)
    for treatment, rep in reference_units or ():
        rep_sets[treatment].add(rep)
    counts = {tr: len(reps) for tr, reps in rep_sets.items()}
    if len(set(counts.values())) != 1:
        raise UnbalancedPanel(f"replicate counts differ across treatments: {counts}")
    replicates = tuple(sorted(set().union(*rep_sets.values())))

    trank = {tr: i for i, tr in enumerate(treatments)}
    records.sort(key=lambda r: (rank[r.season], trank[r.treatment], r.replicate, r.harvest_index))
    used_costs = {k: v for k, v in costs.items() if k[0] in rank and k[1] in trank}
    used_bii = {t: bii[t] for t in sorted(bii)}
    return TrialDataset(
        records=tuple(records),
        costs=dict(sorted(used_costs.items(), key=lambda kv: (rank[kv[0][0]], trank[kv[0][1]]))),
        bii=BiiSeries(used_bii),
        treatments=treatments,
        seasons=seasons,
        replicates=replicates,
    )


def load_dataset(trials_path, costs_path, bii_path, control: str = DEFAULT_CONTROL) -> TrialDataset:
    """Read and validate the three trial CSV files."""
    for p in (trials_path, costs_path, bii_path):
        if not os.path.exists(p):
            raise FileNotFoundError(f"input file not found: {os.fspath(p)}")
    parsed = _parse_trials(trials_path)
    costs = _parse_costs(costs_path)
    bii = _parse_bii(bii_path)
    where = {rec: w for w, rec in parsed}
    return build_dataset([rec for _, rec in parsed], costs, bii, control, where=where)


def write_dataset(dataset: TrialDataset, directory) -> tuple[str, str, str]:
    """Write ``trials.csv``, ``costs.csv`` and ``bii.csv``; floats round-trip exactly."""
    os.makedirs(directory, exist_ok=True)
    paths = tuple(os.path.join(directory, f) for f in ("trials.csv", "costs.csv", "bii.csv"))
    with open(paths[0], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIALS_COLUMNS)
        for r in dataset.records:
            w.writerow([r.season, r.treatment, r.replicate, r.harvest_index, r.global_time,
                        repr(float(r.yield_lb)), repr(float(r.price))])
    with open(paths[1], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COSTS_COLUMNS)
        for cs in dataset.costs.values():
            w.writerow([cs.season, cs.treatment, repr(float(cs.spraying_cost)), repr(float(cs.other_cost))])
    with open(paths[2], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BII_COLUMNS)
        for t, v in dataset.bii.entries.items():
            w.writerow([t, repr(float(v))])
    return paths


# -- descriptive statistics ---------------------------------------------------

@dataclass(frozen=True)
class SummaryRow:
    treatment: str
    statistic: str
    unit: str
    rep: int
    mean: float
    sd: float
    min: float
    max: float


def describe(values: Sequence[float]) -> tuple[int, float, float, float, float]:
    """Count, mean, sample sd (n-1), min and max. sd is NaN for a single value."""
    x = np.asarray(values, dtype=float)
    n = x.size
    mean = math.fsum(x) / n
    if n > 1:
        sd = math.sqrt(math.fsum((x - mean) ** 2) / (n - 1))
    else:
        sd = math.nan
    return n, mean, sd, float(x.min()), float(x.max())


def replicate_season_totals(dataset: TrialDataset, treatment: str) -> list[tuple[str, int, float, float]]:
    """(season, replicate, total yield, spraying cost) for each replicate-season unit."""
    totals: dict[tuple[str, int], float] = defaultdict(float)
    for r in dataset.select(treatment=treatment):
        totals[(r.season, r.replicate)] += r.yield_lb
    return [
        (season, rep, total, dataset.cost(season, treatment).spraying_cost)
        for (season, rep), total in totals.items()
    ]


def summarize(dataset: TrialDataset, include_profit: bool = True) -> list[SummaryRow]:
    """Per-treatment descriptive table in the layout of a trial summary.

    Totals are taken per replicate-season and then described across units,
    so ``rep`` counts replicate-seasons. Profit rows are included when
    ``include_profit`` is true.
    """
    from .econ import season_profits

    out: list[SummaryRow] = []
    for tr in dataset.treatments:
        units = replicate_season_totals(dataset, tr)
        spray = [u[3] for u in units]
        yields = [u[2] for u in units]
        out.append(SummaryRow(tr, "Total Spraying Cost", "$", *describe(spray)))
        out.append(SummaryRow(tr, "Total Yield", "lb", *describe(yields)))
        if include_profit:
            profits = [p for _, _, p in season_profits(dataset, tr)]
            out.append(SummaryRow(tr, "Total Profit", "$", *describe(profits)))
    return out
