"""Monte Carlo yield and profit simulation over disease-pressure x yield-quantile scenarios.

Yields follow the fitted quantile-regression recursion with the BII regressor
replaced by uniform draws from a scenario band. Each (treatment, draw) pair
owns an RNG substream keyed by ``(seed, crc32(treatment), draw)``, so the
same uniforms drive every band (coupling) and adding a treatment leaves the
others' draws untouched.
"""

from __future__ import annotations

import math
import zlib
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .data import TrialDataset
from .econ import CEResult, ProfitSample, RiskProfile, compute_ce_curve
from .errors import MissingPrices, ModelTauMismatch, UnknownTreatment
from .quantreg import QuantileModel

BANDS = {
    "low": (0.10, 0.30),
    "medium": (0.40, 0.60),
    "high": (0.70, 0.90),
}
YIELD_QUANTILES = (0.2, 0.5, 0.8)
TAU_MATCH_TOL = 1e-9


@dataclass(frozen=True)
class Scenario:
    bii_level: str
    band: tuple[float, float]
    tau: float
    price_override: float | None = None
    n_draws: int = 100
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.band
        if not (0.0 <= lo < hi <= 1.0):
            raise ValueError(f"BII band must satisfy 0 <= lower < upper <= 1, got {self.band}")
        if self.n_draws < 1:
            raise ValueError(f"n_draws must be >= 1, got {self.n_draws}")
        if self.price_override is not None and not self.price_override > 0:
            raise ValueError(f"price override must be > 0, got {self.price_override}")

    @property
    def scenario_id(self) -> str:
        sid = f"bii-{self.bii_level}_q{self.tau:g}"
        if self.price_override is not None:
            sid += f"_p{self.price_override:g}"
        return sid


def scenario_grid(
    n_draws: int = 100,
    seed: int = 0,
    price_override: float | None = None,
    taus: Sequence[float] = YIELD_QUANTILES,
    bands: dict[str, tuple[float, float]] | None = None,
) -> list[Scenario]:
    """The band x quantile grid, band-major (rows low..high, columns by tau)."""
    bands = BANDS if bands is None else bands
    return [
        Scenario(level, tuple(band), float(tau), price_override, n_draws, seed)
        for level, band in bands.items()
        for tau in taus
    ]


@dataclass(frozen=True)
class SimulationRun:
    scenario: Scenario
    treatment: str
    draws: np.ndarray
    bii_draws: np.ndarray
    profits: np.ndarray
    prices: np.ndarray
    total_cost: float
    clamp_count: int
    y0: float
    t_start: int


def treatment_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def draw_stream(seed: int, treatment: str, draw: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), treatment_key(treatment), int(draw)]))


def treatment_terms(model: QuantileModel, treatment: str, control: str) -> tuple[float, float, float, float]:
    """(intercept, lag, bii, trend) for one treatment, dummy and interaction folded in."""
    b0 = model.coef("const")
    lag = model.coef("yield_lag")
    bii = model.coef("bii")
    trend = model.coef("t")
    if treatment != control:
        dummy = f"D_{treatment}"
        if dummy not in model.names:
            raise UnknownTreatment(f"model at tau={model.tau:g} has no coefficient {dummy!r} for treatment {treatment!r}")
        b0 += model.coef(dummy)
        trend += model.coef(f"t_x_{treatment}", 0.0)
    return b0, lag, bii, trend


def profits_from_draws(draws: np.ndarray, prices: np.ndarray, total_cost: float) -> np.ndarray:
    return (draws * prices).sum(axis=1) - total_cost


def simulate_yield_path(
    model: QuantileModel,
    treatment: str,
    n_harvests: int,
    y0: float,
    bii_source,
    t_start: int,
    *,
    control: str = "Control",
    tau: float | None = None,
    noise=None,
) -> tuple[np.ndarray, int]:
    """Iterate the yield recursion from ``y0`` (the yield at ``t_start - 1``).

    ``bii_source`` holds the sampled BII values, shape ``(n_harvests,)`` for
    one path or ``(n_draws, n_harvests)`` for many. Negative predictions are
    set to zero; the number of such events is returned with the yields.
    """
    if tau is not None and abs(model.tau - tau) > TAU_MATCH_TOL:
        raise ModelTauMismatch(f"model fitted at tau={model.tau:g}, scenario needs tau={tau:g}")
    if y0 < 0:
        raise ValueError(f"y0 must be >= 0, got {y0}")
    bii = np.asarray(bii_source, dtype=float)
    single = bii.ndim == 1
    bii = np.ascontiguousarray(np.atleast_2d(bii))
    if bii.shape[1] != n_harvests:
        raise ValueError(f"expected {n_harvests} BII values per path, got {bii.shape[1]}")
    noise = np.zeros_like(bii) if noise is None else np.ascontiguousarray(np.atleast_2d(noise), dtype=float)
    b0, lag, bii_coef, trend = treatment_terms(model, treatment, control)
    out, clamps = kernels.yield_paths(b0, lag, bii_coef, trend, bii, noise, float(y0), int(t_start))
    return (out[0] if single else out), int(clamps)


def _pick_model(models: Sequence[QuantileModel], tau: float) -> QuantileModel:
    for m in models:
        if abs(m.tau - tau) <= TAU_MATCH_TOL:
            return m
    raise ModelTauMismatch(f"no fitted model for tau={tau:g}; available: {[m.tau for m in models]}")


@dataclass(frozen=True)
class SimulationInputs:
    """Per-treatment quantities the simulation takes from observed data."""

    n_harvests: int
    prices: np.ndarray | None
    total_cost: dict[str, float]
    y0: dict[str, float]
    t_start: int
    control: str


def simulation_inputs(
    dataset: TrialDataset,
    *,
    season: str | None = None,
    t_start: int | None = None,
    y0: dict[str, float] | None = None,
) -> SimulationInputs:
    """Prices, costs, starting yield and time origin drawn from a dataset.

    Prices are the per-harvest-index mean over seasons (or one season), costs
    the mean season total, ``y0`` the mean first-harvest yield, and time
    continues after the last observed harvest unless ``t_start`` is given.
    """
    seasons = dataset.seasons if season is None else (season,)
    counts = dataset.harvests_per_season
    n_set = {counts[s] for s in seasons}
    prices = None
    if len(n_set) == 1:
        (n_harvests,) = n_set
        by_index = defaultdict(list)
        for r in dataset.records:
            if r.season in seasons:
                by_index[r.harvest_index].append(r.price)
        prices = np.array([math.fsum(by_index[i]) / len(by_index[i]) for i in range(1, n_harvests + 1)])
    else:
        n_harvests = counts[seasons[-1]]
    total_cost = {
        tr: math.fsum(dataset.cost(s, tr).total_cost for s in seasons) / len(seasons)
        for tr in dataset.treatments
    }
    start = {}
    for tr in dataset.treatments:
        first = [r.yield_lb for r in dataset.records
                 if r.treatment == tr and r.harvest_index == 1 and r.season in seasons]
        start[tr] = math.fsum(first) / len(first)
    if y0:
        start.update(y0)
    return SimulationInputs(
        n_harvests=n_harvests,
        prices=prices,
        total_cost=total_cost,
        y0=start,
        t_start=dataset.last_time + 1 if t_start is None else int(t_start),
        control=dataset.control,
    )


def run_scenario(
    models: Sequence[QuantileModel],
    dataset: TrialDataset | SimulationInputs,
    scenario: Scenario,
    *,
    treatments: Sequence[str] | None = None,
    residual_noise: bool = False,
) -> list[SimulationRun]:
    """Simulate ``scenario.n_draws`` yield paths and season profits for every treatment."""
    inputs = dataset if isinstance(dataset, SimulationInputs) else simulation_inputs(dataset)
    model = _pick_model(models, scenario.tau)
    n = inputs.n_harvests
    if scenario.price_override is not None:
        prices = np.full(n, float(scenario.price_override))
    elif inputs.prices is None or inputs.prices.shape[0] != n:
        raise MissingPrices(f"observed price series does not cover {n} harvests and no price override was given")
    else:
        prices = inputs.prices
    if residual_noise and model.residuals is None:
        raise ValueError("residual noise requested but the model carries no training residuals")

    lo, hi = scenario.band
    runs = []
    for tr in (treatments or list(inputs.y0)):
        if tr not in inputs.y0:
            raise UnknownTreatment(f"treatment {tr!r} not present in the dataset")
        uniforms = np.empty((scenario.n_draws, n))
        noise = np.zeros((scenario.n_draws, n))
        for d in range(scenario.n_draws):
            rng = draw_stream(scenario.seed, tr, d)
            uniforms[d] = rng.random(n)
            if residual_noise:
                noise[d] = model.residuals[rng.integers(0, model.residuals.size, size=n)]
        bii = lo + (hi - lo) * uniforms
        draws, clamps = simulate_yield_path(
            model, tr, n, inputs.y0[tr], bii, inputs.t_start,
            control=inputs.control, tau=scenario.tau, noise=noise,
        )
        cost = inputs.total_cost[tr]
        runs.append(SimulationRun(
            scenario=scenario,
            treatment=tr,
            draws=draws,
            bii_draws=bii,
            profits=profits_from_draws(draws, prices, cost),
            prices=prices,
            total_cost=cost,
            clamp_count=clamps,
            y0=inputs.y0[tr],
            t_start=inputs.t_start,
        ))
    return runs


@dataclass
class GridResult:
    scenarios: list[Scenario]
    runs: dict[str, list[SimulationRun]] = field(default_factory=dict)
    ce: dict[str, list[CEResult]] = field(default_factory=dict)

    def cell(self, bii_level: str, tau: float, price_override: float | None = None) -> list[CEResult]:
        for sc in self.scenarios:
            if (sc.bii_level == bii_level and abs(sc.tau - tau) <= TAU_MATCH_TOL
                    and sc.price_override == price_override):
                return self.ce[sc.scenario_id]
        raise KeyError((bii_level, tau, price_override))

    @property
    def clamp_count(self) -> int:
        return sum(run.clamp_count for runs in self.runs.values() for run in runs)


def run_grid(
    models: Sequence[QuantileModel],
    dataset: TrialDataset | SimulationInputs,
    scenarios: Sequence[Scenario],
    profile: RiskProfile,
    **kwargs,
) -> GridResult:
    """Simulate every scenario and compute CE curves with the draws as the replicate set."""
    inputs = dataset if isinstance(dataset, SimulationInputs) else simulation_inputs(dataset)
    out = GridResult(list(scenarios))
    for sc in scenarios:
        if sc.scenario_id in out.runs:
            raise ValueError(f"duplicate scenario {sc.scenario_id}")
        runs = run_scenario(models, inputs, sc, **kwargs)
        out.runs[sc.scenario_id] = runs
        out.ce[sc.scenario_id] = [compute_ce_curve(ProfitSample(r.treatment, r.profits), profile) for r in runs]
    return out
