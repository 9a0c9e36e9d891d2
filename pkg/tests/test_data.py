import csv
import math
import os
import random

import numpy as np
import pytest

from serfsim import errors
from serfsim.data import (
    BII_COLUMNS,
    COSTS_COLUMNS,
    TRIALS_COLUMNS,
    build_dataset,
    describe,
    load_dataset,
    summarize,
    write_dataset,
)
from serfsim.quantreg import build_design

from conftest import make_dataset


def _rewrite(path, mutate):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    rows = mutate(rows)
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def test_fixture_shape(fixture_dataset):
    ds = fixture_dataset
    assert len(ds.records) == 768
    assert ds.treatments == ("Control", "Fracture", "Milstop", "Serenade")
    assert ds.seasons == ("2014-15", "2015-16")
    assert ds.harvests_per_season == {"2014-15": 24, "2015-16": 24}
    assert ds.replicates == (1, 2, 3, 4)
    assert build_design(ds).n_obs == 752


def test_fixture_is_reproducible(fixture_dataset):
    from serfsim.fixtures import synthetic_dataset

    assert synthetic_dataset() == fixture_dataset


def test_round_trip(small_csvs):
    ds, paths = small_csvs
    assert load_dataset(*paths) == ds


def test_row_permutation_invariance(small_csvs, tmp_path):
    ds, paths = small_csvs
    rng = random.Random(3)

    def shuffle(rows):
        body = rows[1:]
        rng.shuffle(body)
        return [rows[0], *body]

    for p in paths:
        _rewrite(p, shuffle)
    assert load_dataset(*paths) == ds


def test_missing_file_is_named(small_csvs):
    _, (trials, costs, bii) = small_csvs
    os.remove(bii)
    with pytest.raises(FileNotFoundError, match="bii.csv"):
        load_dataset(trials, costs, bii)


def test_missing_column(small_csvs):
    _, (trials, costs, bii) = small_csvs
    _rewrite(trials, lambda rows: [[c for i, c in enumerate(r) if i != 5] for r in rows])
    with pytest.raises(errors.MissingColumn, match="yield_lb"):
        load_dataset(trials, costs, bii)


def test_non_numeric_yield_reports_line(small_csvs):
    _, (trials, costs, bii) = small_csvs

    def bad(rows):
        rows[3][5] = "lots"
        return rows

    _rewrite(trials, bad)
    with pytest.raises(errors.NonNumericField, match=r"trials\.csv:4.*yield_lb"):
        load_dataset(trials, costs, bii)


def test_empty_field(small_csvs):
    _, (trials, costs, bii) = small_csvs

    def bad(rows):
        rows[2][6] = ""
        return rows

    _rewrite(trials, bad)
    with pytest.raises(errors.MissingValue):
        load_dataset(trials, costs, bii)


def test_negative_yield_rejected(small_csvs):
    _, (trials, costs, bii) = small_csvs

    def bad(rows):
        rows[1][5] = "-1"
        return rows

    _rewrite(trials, bad)
    with pytest.raises(errors.InvalidValue):
        load_dataset(trials, costs, bii)


def test_duplicate_record(small_csvs):
    _, (trials, costs, bii) = small_csvs
    _rewrite(trials, lambda rows: rows + [rows[1]])
    with pytest.raises(errors.DuplicateKey):
        load_dataset(trials, costs, bii)


def test_bii_out_of_range(small_csvs):
    _, (trials, costs, bii) = small_csvs

    def bad(rows):
        rows[1][1] = "1.2"
        return rows

    _rewrite(bii, bad)
    with pytest.raises(errors.BiiOutOfRange):
        load_dataset(trials, costs, bii)


def test_missing_bii(small_csvs):
    _, (trials, costs, bii) = small_csvs
    _rewrite(bii, lambda rows: rows[:-1])
    with pytest.raises(errors.MissingBii):
        load_dataset(trials, costs, bii)


def test_missing_cost(small_csvs):
    _, (trials, costs, bii) = small_csvs
    _rewrite(costs, lambda rows: rows[:-1])
    with pytest.raises(errors.MissingCost):
        load_dataset(trials, costs, bii)


def test_control_must_not_spray(small_csvs):
    _, (trials, costs, bii) = small_csvs

    def bad(rows):
        for r in rows[1:]:
            if r[1] == "Control":
                r[2] = "10"
        return rows

    _rewrite(costs, bad)
    with pytest.raises(errors.InvalidValue, match="spraying"):
        load_dataset(trials, costs, bii)


def test_unbalanced_panel():
    ds = make_dataset()
    records = [r for r in ds.records if not (r.treatment == "Fracture" and r.replicate == 2 and r.harvest_index == 4)]
    with pytest.raises(errors.UnbalancedPanel):
        build_dataset(records, ds.costs, ds.bii.entries)


def test_inconsistent_time():
    ds = make_dataset()
    records = list(ds.records)
    r = records[0]
    records[0] = type(r)(r.season, r.treatment, r.replicate, r.harvest_index, r.global_time + 1, r.yield_lb, r.price)
    with pytest.raises(errors.InconsistentTime):
        build_dataset(records, ds.costs, ds.bii.entries)


def test_errors_are_value_errors_with_input_exit_code():
    assert issubclass(errors.UnbalancedPanel, ValueError)
    assert errors.MissingBii.exit_code == 2
    assert errors.RankDeficientDesign.exit_code == 3


def test_header_constants():
    assert TRIALS_COLUMNS[0] == "season" and "price_usd_per_lb" in TRIALS_COLUMNS
    assert COSTS_COLUMNS == ("season", "treatment", "spraying_cost_usd", "other_cost_usd")
    assert BII_COLUMNS == ("global_time", "bii")


def test_describe():
    n, mean, sd, lo, hi = describe([1.0, 2.0, 3.0, 4.0])
    assert (n, mean, lo, hi) == (4, 2.5, 1.0, 4.0)
    assert sd == pytest.approx(math.sqrt(5 / 3))
    assert math.isnan(describe([7.0])[2])


def test_summarize_layout(fixture_dataset):
    rows = summarize(fixture_dataset)
    assert len(rows) == 12
    stats = [r.statistic for r in rows[:3]]
    assert stats == ["Total Spraying Cost", "Total Yield", "Total Profit"]
    control_spray = rows[0]
    assert control_spray.treatment == "Control"
    assert control_spray.mean == control_spray.max == 0.0
    assert all(r.rep == 8 for r in rows)
    profit = next(r for r in rows if r.treatment == "Control" and r.statistic == "Total Profit")
    assert profit.mean == pytest.approx(5869.6, abs=0.01)
    assert profit.min < 0


def test_summary_totals_match_records():
    ds = make_dataset(seed=5)
    rows = {(r.treatment, r.statistic): r for r in summarize(ds)}
    totals = [sum(x.yield_lb for x in ds.select(treatment="Fracture") if x.season == s and x.replicate == rep)
              for s in ds.seasons for rep in ds.replicates]
    assert rows[("Fracture", "Total Yield")].mean == pytest.approx(np.mean(totals))
    assert rows[("Fracture", "Total Spraying Cost")].mean == 100.0


def test_write_dataset_is_exact(tmp_path):
    ds = make_dataset(seed=9)
    paths = write_dataset(ds, tmp_path)
    again = write_dataset(load_dataset(*paths), tmp_path / "b")
    for a, b in zip(paths, again):
        assert open(a, "rb").read() == open(b, "rb").read()
