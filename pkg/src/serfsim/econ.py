"""Profits, certainty equivalents under power utility, SERF ranking and dominance."""

from __future__ import annotations

import logging
import math
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .data import TrialDataset
from .errors import MissingCost, NonPositiveWealthAdjustedProfit, RacNotInGrid

log = logging.getLogger(__name__)

STANDARD = "standard"
PAPER_LITERAL = "paper_literal"
CONVENTIONS = (STANDARD, PAPER_LITERAL)

DOMINANCE_TOL = 1e-12
RAC_MATCH_TOL = 1e-9


# -- profit ----------------------------------------------------------------------

def compute_profit(prices, yields, total_cost: float | None, per_harvest_cost=None) -> float:
    """Season profit: revenue summed over harvests minus the season's total cost.

    The total cost is subtracted once. If a per-harvest cost schedule is given
    it must add up to ``total_cost``.
    """
    if total_cost is None:
        raise MissingCost("no total cost supplied for profit computation")
    p = np.asarray(prices, dtype=float)
    y = np.asarray(yields, dtype=float)
    if p.shape != y.shape or p.size == 0:
        raise ValueError(f"prices and yields must be non-empty and aligned, got {p.shape} and {y.shape}")
    if per_harvest_cost is not None:
        c = np.asarray(per_harvest_cost, dtype=float)
        if not math.isclose(math.fsum(c), total_cost, rel_tol=1e-9, abs_tol=1e-9):
            raise ValueError(f"per-harvest costs sum to {math.fsum(c)}, expected total {total_cost}")
    return float(np.dot(p, y)) - float(total_cost)


def season_profits(dataset: TrialDataset, treatment: str, season: str | None = None) -> list[tuple[str, int, float]]:
    """(season, replicate, profit) for each replicate-season of one treatment."""
    seasons = dataset.seasons if season is None else (season,)
    out = []
    for s in seasons:
        cost = dataset.cost(s, treatment).total_cost
        for rep in dataset.replicates:
            chain = dataset.chain(treatment, rep, season=s)
            out.append((s, rep, compute_profit([r.price for r in chain], [r.yield_lb for r in chain], cost)))
    return out


@dataclass(frozen=True)
class ProfitSample:
    treatment: str
    profits: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.profits, dtype=float).ravel()
        if p.size == 0:
            raise ValueError(f"profit sample for {self.treatment!r} is empty")
        if not np.isfinite(p).all():
            raise ValueError(f"profit sample for {self.treatment!r} has non-finite entries")
        object.__setattr__(self, "profits", p)


def observed_samples(dataset: TrialDataset, season: str | None = None) -> list[ProfitSample]:
    return [
        ProfitSample(tr, np.array([p for _, _, p in season_profits(dataset, tr, season)]))
        for tr in dataset.treatments
    ]


# -- certainty equivalents ---------------------------------------------------------

@dataclass(frozen=True)
class RiskProfile:
    rac_grid: tuple[float, ...] = tuple(np.round(np.arange(0.0, 4.0 + 1e-9, 0.25), 10))
    w0: float = 0.0
    convention: str = STANDARD

    def __post_init__(self):
        grid = tuple(float(r) for r in self.rac_grid)
        if not grid:
            raise ValueError("rac_grid is empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError(f"rac_grid must be strictly increasing, got {grid}")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"unknown exponent convention {self.convention!r}; use one of {CONVENTIONS}")
        if self.w0 < 0:
            raise ValueError(f"w0 must be >= 0, got {self.w0}")
        if grid[0] > 0.5 or grid[-1] < 4.0:
            log.warning("RAC grid %s does not span [0.5, 4]", grid)
        object.__setattr__(self, "rac_grid", grid)

    @classmethod
    def from_range(cls, rac_min: float, rac_max: float, rac_step: float, **kw) -> "RiskProfile":
        if rac_step <= 0:
            raise ValueError(f"rac step must be > 0, got {rac_step}")
        count = int(math.floor((rac_max - rac_min) / rac_step + 1e-9)) + 1
        grid = tuple(round(rac_min + i * rac_step, 10) for i in range(count))
        return cls(rac_grid=grid, **kw)


def utility_exponent(rac: float, convention: str = STANDARD) -> float:
    if convention == STANDARD:
        return 1.0 - rac
    if convention == PAPER_LITERAL:
        return rac
    raise ValueError(f"unknown exponent convention {convention!r}")


def min_sufficient_w0(profits) -> float:
    """Smallest w0 making every wealth-adjusted profit positive (exclusive bound)."""
    return max(0.0, -float(np.min(profits)))


def exact_mean(values) -> float:
    """Arithmetic mean rounded once, from an exact rational sum."""
    return float(sum(map(Fraction, np.asarray(values, dtype=float).tolist()), Fraction(0)) / len(values))


def compute_ce(profits, rac: float, w0: float = 0.0, convention: str = STANDARD) -> float:
    """Certainty equivalent of a profit sample under power utility.

    ``rac == 0`` gives the arithmetic mean. Otherwise the CE is the power mean
    of ``profit + w0`` with exponent ``1 - rac`` (standard) or ``rac``
    (paper_literal), minus ``w0``; exponent 0 is the geometric mean.
    """
    if isinstance(profits, ProfitSample):
        profits = profits.profits
    p = np.asarray(profits, dtype=float).ravel()
    if p.size == 0:
        raise ValueError("empty profit sample")
    if rac == 0:
        return exact_mean(p)
    x = p + w0
    if (x <= 0).any():
        bad = int(np.flatnonzero(x <= 0)[0])
        need = min_sufficient_w0(p)
        raise NonPositiveWealthAdjustedProfit(
            f"profit + w0 = {x[bad]:.6g} <= 0 at replicate {bad} (rac={rac:g}); "
            f"set w0 > {need:.6g}",
            min_w0=need,
        )
    if (p == p[0]).all():
        return float(p[0])
    e = utility_exponent(rac, convention)
    top = x.max()
    z = x / top
    if e == 0:
        m = top * math.exp(math.fsum(np.log(z)) / z.size)
    else:
        m = top * (math.fsum(z**e) / z.size) ** (1.0 / e)
    return m - w0


@dataclass(frozen=True)
class CEResult:
    treatment: str
    rac: np.ndarray
    ce: np.ndarray
    emv: float
    risk_premium: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "risk_premium", self.emv - self.ce)

    def at(self, rac: float) -> float:
        idx = np.flatnonzero(np.abs(self.rac - rac) <= RAC_MATCH_TOL)
        if idx.size == 0:
            raise RacNotInGrid(f"rac={rac:g} not in grid for treatment {self.treatment!r}")
        return float(self.ce[idx[0]])

    def records(self) -> list[dict]:
        return [
            {"treatment": self.treatment, "rac": float(r), "ce": float(c), "emv": self.emv, "risk_premium": float(rp)}
            for r, c, rp in zip(self.rac, self.ce, self.risk_premium)
        ]


def compute_ce_curve(sample: ProfitSample, profile: RiskProfile) -> CEResult:
    ces = []
    for rac in profile.rac_grid:
        try:
            ces.append(compute_ce(sample.profits, rac, profile.w0, profile.convention))
        except NonPositiveWealthAdjustedProfit as err:
            raise NonPositiveWealthAdjustedProfit(f"treatment {sample.treatment!r}: {err}", err.min_w0) from err
    return CEResult(
        treatment=sample.treatment,
        rac=np.asarray(profile.rac_grid, dtype=float),
        ce=np.asarray(ces),
        emv=exact_mean(sample.profits),
    )


@dataclass(frozen=True)
class RankEntry:
    rank: int
    treatment: str
    ce: float
    tied: bool


def rank_treatments(results: Iterable[CEResult], rac: float) -> list[RankEntry]:
    """Order treatments by CE at one RAC, best first; equal CEs sort by name and are flagged."""
    pairs = sorted(((res.treatment, res.at(rac)) for res in results), key=lambda tc: (-tc[1], tc[0]))
    out = []
    for i, (tr, ce) in enumerate(pairs):
        tied = any(j != i and ce == other for j, (_, other) in enumerate(pairs))
        out.append(RankEntry(i + 1, tr, ce, tied))
    return out


def rank_all(results: Sequence[CEResult], rac_grid: Iterable[float]) -> dict[float, list[RankEntry]]:
    return {float(r): rank_treatments(results, r) for r in rac_grid}


# -- stochastic dominance --------------------------------------------------------

@dataclass(frozen=True)
class Dominance:
    a_fsd_b: bool
    b_fsd_a: bool
    a_ssd_b: bool
    b_ssd_a: bool

    @property
    def relation(self) -> str:
        for name in ("a_fsd_b", "b_fsd_a", "a_ssd_b", "b_ssd_a"):
            if getattr(self, name):
                return name
        return "none"


def _dominates(lo: np.ndarray, hi: np.ndarray, tol: float) -> bool:
    """True when lo <= hi everywhere and lo < hi somewhere."""
    return bool(np.all(lo <= hi + tol) and np.any(lo < hi - tol))


def dominance(a, b) -> Dominance:
    """First- and second-degree stochastic dominance between two samples.

    Empirical CDFs are compared on the merged support. A sample dominates when
    its CDF (or integrated CDF, for second degree) is nowhere above the other's
    and somewhere below it.
    """
    a = np.sort(np.asarray(getattr(a, "profits", a), dtype=float).ravel())
    b = np.sort(np.asarray(getattr(b, "profits", b), dtype=float).ravel())
    grid = np.union1d(a, b)
    Fa = np.searchsorted(a, grid, side="right") / a.size
    Fb = np.searchsorted(b, grid, side="right") / b.size
    # integrated CDFs are piecewise linear with kinks on the grid
    widths = np.diff(grid)
    Ia = np.concatenate(([0.0], np.cumsum(Fa[:-1] * widths)))
    Ib = np.concatenate(([0.0], np.cumsum(Fb[:-1] * widths)))
    itol = DOMINANCE_TOL * max(1.0, grid[-1] - grid[0])
    return Dominance(
        a_fsd_b=_dominates(Fa, Fb, DOMINANCE_TOL),
        b_fsd_a=_dominates(Fb, Fa, DOMINANCE_TOL),
        a_ssd_b=_dominates(Ia, Ib, itol),
        b_ssd_a=_dominates(Ib, Ia, itol),
    )
