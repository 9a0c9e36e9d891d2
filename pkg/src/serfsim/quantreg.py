"""Panel quantile regression of yield on lagged yield, disease pressure and trend.

The model fitted for each quantile ``tau`` is::

    yield_t = b0 + b1*yield_{t-1} + b2*BII_t + b3*t
              + sum_i g_i*D_i + t * sum_i d_i*D_i

with one dummy ``D_i`` per non-control treatment. Estimation minimises the
pinball (check) loss exactly, as a linear program solved by a primal simplex
with Bland's pivoting rule (see :mod:`serfsim.kernels`).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .data import TrialDataset
from .errors import (
    BootstrapFailure,
    DegenerateLP,
    InsufficientHarvests,
    RankDeficientDesign,
    SerfsimError,
    TauOutOfRange,
    TooFewRows,
)

RANK_TOL = 1e-10
BASE_REGRESSORS = ("const", "yield_lag", "bii", "t")


def regressor_names(treatments: Sequence[str]) -> tuple[str, ...]:
    """Column names for a treatment list whose first entry is the control."""
    others = list(treatments[1:])
    return (*BASE_REGRESSORS, *(f"D_{tr}" for tr in others), *(f"t_x_{tr}" for tr in others))


@dataclass(frozen=True)
class Design:
    """Design matrix with one row per (treatment, replicate, t) after the first harvest."""

    y: np.ndarray
    X: np.ndarray
    names: tuple[str, ...]
    treatment: tuple[str, ...] = ()
    replicate: np.ndarray | None = None
    t: np.ndarray | None = None

    @property
    def n_obs(self) -> int:
        return self.y.shape[0]

    def take(self, idx: np.ndarray) -> "Design":
        return Design(self.y[idx], self.X[idx], self.names)


def build_design(dataset: TrialDataset) -> Design:
    """Lagged-yield design for the whole panel.

    The lag chains within each (treatment, replicate) plot across season
    boundaries, so only the first record of each chain is consumed.
    """
    names = regressor_names(dataset.treatments)
    others = dataset.treatments[1:]
    ys, rows, trs, reps, ts = [], [], [], [], []
    for tr in dataset.treatments:
        for rep in dataset.replicates:
            chain = dataset.chain(tr, rep)
            if len(chain) < 2:
                raise InsufficientHarvests(
                    f"treatment={tr!r} replicate={rep} has {len(chain)} record(s); the lag needs at least 2"
                )
            for prev, cur in zip(chain, chain[1:]):
                t = float(cur.global_time)
                dummies = [1.0 if tr == o else 0.0 for o in others]
                rows.append([1.0, prev.yield_lb, dataset.bii[cur.global_time], t,
                             *dummies, *(t * dv for dv in dummies)])
                ys.append(cur.yield_lb)
                trs.append(tr)
                reps.append(rep)
                ts.append(cur.global_time)
    return Design(
        y=np.asarray(ys, dtype=float),
        X=np.asarray(rows, dtype=float).reshape(len(rows), len(names)),
        names=names,
        treatment=tuple(trs),
        replicate=np.asarray(reps),
        t=np.asarray(ts),
    )


def _check_tau(tau: float) -> float:
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise TauOutOfRange(f"tau must lie in (0, 1), got {tau}")
    return tau


def pinball_loss(residuals, tau: float) -> float:
    """Sum of check-loss values: tau*r for r >= 0, (tau-1)*r otherwise."""
    tau = _check_tau(tau)
    r = np.asarray(residuals, dtype=float)
    return float(np.sum(np.where(r >= 0, tau * r, (tau - 1.0) * r)))


def check_rank(X: np.ndarray) -> None:
    sv = np.linalg.svd(X, compute_uv=False)
    if sv.size == 0 or sv.min() <= RANK_TOL * sv.max():
        raise RankDeficientDesign(
            f"design matrix is rank deficient: smallest/largest singular value "
            f"{(sv.min() / sv.max()) if sv.size and sv.max() > 0 else 0.0:.3g} <= {RANK_TOL:g}"
        )


def initial_basis(X: np.ndarray) -> np.ndarray:
    """First k linearly independent rows, scanning in row order."""
    n, k = X.shape
    q = np.zeros((0, k))
    chosen = []
    for i in range(n):
        v = X[i] - q.T @ (q @ X[i])
        norm = np.linalg.norm(v)
        if norm > RANK_TOL * max(1.0, np.linalg.norm(X[i])):
            q = np.vstack([q, v / norm])
            chosen.append(i)
            if len(chosen) == k:
                return np.asarray(chosen, dtype=np.int64)
    raise RankDeficientDesign(f"could only find {len(chosen)} independent rows for {k} regressors")


def solve_rq(X, y, tau: float, *, max_iter: int | None = None, backend: str | None = None):
    """Exact quantile-regression coefficients; returns (beta, iterations).

    ``backend`` forces ``"numba"`` or ``"numpy"``; default follows the env flag.
    """
    tau = _check_tau(tau)
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    n, k = X.shape
    if n <= k:
        raise TooFewRows(f"need more rows than regressors, got n={n}, k={k}")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise DegenerateLP("design or response contains non-finite values")
    check_rank(X)
    # equilibrate columns; vertices of the LP are unchanged
    colscale = np.abs(X).max(axis=0)
    Xs = np.ascontiguousarray(X / colscale)
    h = initial_basis(Xs)
    if max_iter is None:
        max_iter = 50 * n + 1000
    if backend == "numpy":
        solver = kernels.rq_simplex_numpy
    elif backend == "numba":
        if kernels.rq_simplex_numba is None:
            raise RuntimeError("numba backend requested but numba is unavailable")
        solver = kernels.rq_simplex_numba
    else:
        solver = kernels.rq_simplex
    try:
        beta, _, _, status, iterations = solver(Xs, y, tau, h, max_iter)
    except np.linalg.LinAlgError as err:
        raise DegenerateLP(f"simplex basis became singular: {err}") from None
    if status == kernels.UNBOUNDED:
        raise DegenerateLP("simplex found an unbounded direction; check the design for malformed values")
    if status != kernels.OPTIMAL:
        raise DegenerateLP(f"simplex did not converge within {max_iter} pivots")
    return np.asarray(beta, dtype=float) / colscale, int(iterations)


@dataclass
class QuantileModel:
    tau: float
    names: tuple[str, ...]
    coefficients: np.ndarray
    standard_errors: np.ndarray | None = None
    objective: float = math.nan
    n_obs: int = 0
    iterations: int = 0
    residuals: np.ndarray | None = field(default=None, repr=False, compare=False)

    def coef(self, name: str, default: float | None = None) -> float:
        try:
            return float(self.coefficients[self.names.index(name)])
        except ValueError:
            if default is None:
                raise KeyError(name) from None
            return default

    def to_dict(self) -> dict:
        se = None if self.standard_errors is None else [float(v) for v in self.standard_errors]
        return {
            "tau": self.tau,
            "coefficient_names": list(self.names),
            "coefficients": [float(v) for v in self.coefficients],
            "standard_errors": se,
            "objective": self.objective,
            "n_obs": self.n_obs,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "QuantileModel":
        se = d.get("standard_errors")
        return cls(
            tau=float(d["tau"]),
            names=tuple(d["coefficient_names"]),
            coefficients=np.asarray(d["coefficients"], dtype=float),
            standard_errors=None if se is None else np.asarray(se, dtype=float),
            objective=float(d.get("objective", math.nan)),
            n_obs=int(d.get("n_obs", 0)),
        )

    @classmethod
    def from_json(cls, text: str) -> "QuantileModel":
        return cls.from_dict(json.loads(text))


def fit_quantile(design: Design, tau: float, **kwargs) -> QuantileModel:
    beta, iterations = solve_rq(design.X, design.y, tau, **kwargs)
    resid = design.y - design.X @ beta
    return QuantileModel(
        tau=float(tau),
        names=design.names,
        coefficients=beta,
        objective=pinball_loss(resid, tau),
        n_obs=design.n_obs,
        iterations=iterations,
        residuals=resid,
    )


def _with_tau(err: SerfsimError, tau: float) -> SerfsimError:
    out = type(err)(f"tau={tau:g}: {err}")
    out.__cause__ = err
    return out


def fit_all_quantiles(design: Design, taus: Sequence[float], **kwargs) -> list[QuantileModel]:
    models = []
    for tau in taus:
        try:
            models.append(fit_quantile(design, tau, **kwargs))
        except SerfsimError as err:
            raise _with_tau(err, tau) from err
    return models


@dataclass(frozen=True)
class BootstrapResult:
    standard_errors: np.ndarray
    n_boot: int
    n_skipped: int
    draws: np.ndarray = field(repr=False)


def bootstrap_se(design: Design, tau: float, n_boot: int = 200, seed: int = 0, **kwargs) -> BootstrapResult:
    """Pairs bootstrap: refit on ``n_boot`` row resamples of size n.

    Resample ``b`` draws from ``SeedSequence([seed, b])`` so each replicate
    is reproducible on its own. Resamples whose fit fails (e.g. a treatment
    missing from the draw) are skipped; more than half skipping is an error.
    """
    tau = _check_tau(tau)
    if n_boot < 2:
        raise ValueError(f"n_boot must be >= 2, got {n_boot}")
    n = design.n_obs
    coefs = []
    skipped = 0
    for b in range(n_boot):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), b]))
        idx = rng.integers(0, n, size=n)
        try:
            beta, _ = solve_rq(design.X[idx], design.y[idx], tau, **kwargs)
        except (RankDeficientDesign, DegenerateLP, TooFewRows):
            skipped += 1
            continue
        coefs.append(beta)
    if skipped * 2 > n_boot or len(coefs) < 2:
        raise BootstrapFailure(f"tau={tau:g}: {skipped} of {n_boot} bootstrap resamples failed to fit")
    draws = np.asarray(coefs)
    return BootstrapResult(draws.std(axis=0, ddof=1), n_boot, skipped, draws)


def fit_with_se(design: Design, taus: Sequence[float], n_boot: int, seed: int, **kwargs) -> list[QuantileModel]:
    """Fit every tau and attach bootstrap standard errors (skipped when n_boot == 0)."""
    models = fit_all_quantiles(design, taus, **kwargs)
    if n_boot:
        for m in models:
            try:
                m.standard_errors = bootstrap_se(design, m.tau, n_boot, seed, **kwargs).standard_errors
            except SerfsimError as err:
                raise _with_tau(err, m.tau) from err
    return models


def subgradient_counts(X, y, beta, tol: float = 1e-9) -> tuple[int, int]:
    """(#negative, #positive) residuals, ignoring |r| below tol*(1+max|y|)."""
    y = np.asarray(y, dtype=float)
    r = y - np.asarray(X) @ np.asarray(beta)
    eps = tol * (1.0 + np.abs(y).max())
    return int((r < -eps).sum()), int((r > eps).sum())
