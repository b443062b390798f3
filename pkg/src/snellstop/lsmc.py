"""Least-squares Monte Carlo stopping policies on simulated GBM paths.

The fitted policy is a fixed stopping rule, so its value on an independent
ensemble is a statistical lower bound for the exact value. Discounting, if
any, lives inside the payoff ``f(level, state)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterOutOfRange, SeedReuseWarning, SingularRegression
from .model import TimeGrid

RIDGE = 1e-8


@dataclass(frozen=True)
class PathEnsemble:
    grid: TimeGrid
    states: np.ndarray = field(repr=False)  # (n_paths, N+1)
    seed: int

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]


def simulate_gbm(s0, drift, volatility, grid: TimeGrid, n_paths: int, seed: int) -> PathEnsemble:
    """Exact lognormal steps: ``S_{k+1} = S_k exp((mu - sigma^2/2) dt + sigma sqrt(dt) Z)``."""
    if s0 <= 0 or volatility < 0 or n_paths < 1:
        raise ParameterOutOfRange("need s0 > 0, volatility >= 0 and n_paths >= 1")
    times = np.asarray(grid.times, dtype=float)
    dt = np.diff(times)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_paths, grid.n_steps))
    incr = (drift - 0.5 * volatility ** 2) * dt + volatility * np.sqrt(dt) * z
    log_paths = np.concatenate([np.zeros((n_paths, 1)), np.cumsum(incr, axis=1)], axis=1)
    return PathEnsemble(grid, float(s0) * np.exp(log_paths), seed)


@dataclass(frozen=True)
class RegressionPolicy:
    """Per-level continuation regressions; level 0 is a direct comparison, level N stops."""

    coefficients: tuple       # level -> array or None (None: never stop early there)
    centers: tuple
    scales: tuple
    basis_degree: int
    stop_at_zero: bool
    seed: int | None = None

    @classmethod
    def stop_at_horizon(cls, grid: TimeGrid, basis_degree: int = 1) -> "RegressionPolicy":
        n = grid.n_steps
        return cls((None,) * (n + 1), (0.0,) * (n + 1), (1.0,) * (n + 1), basis_degree, False)

    def continuation(self, level: int, x: np.ndarray) -> np.ndarray:
        coef = self.coefficients[level]
        return _basis(x, self.centers[level], self.scales[level], self.basis_degree) @ coef


def _basis(x, center, scale, degree):
    z = (x - center) / scale
    return np.vander(z, degree + 1, increasing=True)


def _solve(design: np.ndarray, target: np.ndarray) -> np.ndarray:
    coef, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    if rank < design.shape[1]:
        gram = design.T @ design
        lam = RIDGE * max(np.trace(gram) / gram.shape[0], 1.0)
        try:
            coef = np.linalg.solve(gram + lam * np.eye(gram.shape[0]), design.T @ target)
        except np.linalg.LinAlgError:
            raise SingularRegression("regression singular even after ridge") from None
    if not np.all(np.isfinite(coef)):
        raise SingularRegression("non-finite regression coefficients")
    return coef


def fit_policy(ensemble: PathEnsemble, f, basis_degree: int = 3) -> RegressionPolicy:
    """Backward pass regressing realised future payoffs on in-the-money paths."""
    if basis_degree < 1:
        raise ParameterOutOfRange("basis_degree must be >= 1")
    if ensemble.n_paths <= 10 * (basis_degree + 1):
        raise ParameterOutOfRange("need more than 10 * (basis_degree + 1) paths")
    n = ensemble.grid.n_steps
    x = ensemble.states
    cash = np.asarray(f(n, x[:, n]), dtype=float)
    coefs = [None] * (n + 1)
    centers = [0.0] * (n + 1)
    scales = [1.0] * (n + 1)
    for t in range(n - 1, 0, -1):
        xt = x[:, t]
        now = np.asarray(f(t, xt), dtype=float)
        itm = now > 0
        if itm.sum() <= basis_degree:
            continue
        xs = xt[itm]
        center, scale = xs.mean(), xs.std()
        if scale == 0:
            # all in-the-money states coincide: only the constant is identifiable
            coef = np.zeros(basis_degree + 1)
            coef[0] = cash[itm].mean()
            scale = 1.0
        else:
            coef = _solve(_basis(xs, center, scale, basis_degree), cash[itm])
        coefs[t], centers[t], scales[t] = coef, center, scale
        cont = _basis(xs, center, scale, basis_degree) @ coef
        ex = np.zeros_like(itm)
        ex[itm] = now[itm] >= cont
        cash = np.where(ex, now, cash)
    stop_at_zero = float(f(0, x[:1, 0])[0]) >= cash.mean()
    return RegressionPolicy(tuple(coefs), tuple(centers), tuple(scales), basis_degree,
                            bool(stop_at_zero), ensemble.seed)


def stopped_payoffs(ensemble: PathEnsemble, policy: RegressionPolicy, f) -> tuple:
    """Payoff collected on each path and the level it stopped at."""
    n = ensemble.grid.n_steps
    x = ensemble.states
    m = ensemble.n_paths
    if policy.stop_at_zero:
        return np.asarray(f(0, x[:, 0]), dtype=float), np.zeros(m, dtype=int)
    paid = np.zeros(m)
    when = np.full(m, n)
    alive = np.ones(m, dtype=bool)
    for t in range(1, n):
        if policy.coefficients[t] is None:
            continue
        now = np.asarray(f(t, x[:, t]), dtype=float)
        cand = alive & (now > 0)
        if not cand.any():
            continue
        ex = np.zeros(m, dtype=bool)
        ex[cand] = now[cand] >= policy.continuation(t, x[cand, t])
        paid[ex] = now[ex]
        when[ex] = t
        alive &= ~ex
    paid[alive] = np.asarray(f(n, x[alive, n]), dtype=float)
    return paid, when


def policy_value(ensemble: PathEnsemble, policy: RegressionPolicy, f) -> tuple:
    """(estimate, standard error) of E[phi(theta)] on an out-of-sample ensemble."""
    if policy.seed is not None and policy.seed == ensemble.seed:
        warnings.warn("evaluation ensemble reuses the fitting seed; the estimate is biased upward",
                      SeedReuseWarning, stacklevel=2)
    paid, _ = stopped_payoffs(ensemble, policy, f)
    se = paid.std(ddof=1) / math.sqrt(len(paid)) if len(paid) > 1 else 0.0
    return float(paid.mean()), float(se)


@dataclass
class LatticeComparison:
    estimate: float
    stderr: float
    lattice_value: float
    gap: float
    relative_gap: float
    flagged: bool

    @property
    def verdict(self) -> str:
        return "EXCEEDS_LATTICE" if self.flagged else "OK"


def compare_to_lattice(value: tuple, lattice_value: float, n_sigma: float = 3.0) -> LatticeComparison:
    """Flag a lower-bound estimate that significantly exceeds the exact value."""
    est, se = value
    lattice_value = float(lattice_value)
    gap = lattice_value - est
    rel = gap / lattice_value if lattice_value else 0.0
    return LatticeComparison(est, se, lattice_value, gap, rel, est > lattice_value + n_sigma * se)


def bermudan_lattice_value(s0, strike, rate, volatility, horizon, n_dates, substeps, payoff_kind="put"):
    """Exact-engine reference for a payoff exercisable only on ``n_dates`` equally spaced dates.

    A CRR lattice with ``n_dates * substeps`` steps carries a discounted reward
    that is zero between exercise dates; with nonnegative rewards stopping
    there is never strictly better, so the envelope is the Bermudan value.
    """
    from . import snell
    from .model import build_crr
    from .reward import Discounted, Payoff, from_function

    model = build_crr(s0, volatility, rate, horizon, n_dates * substeps)
    base = Discounted(Payoff(payoff_kind, strike), rate, model.grid.times)

    def f(level, x):
        return base(level, x) if level % substeps == 0 else 0.0

    return snell.compute(model, from_function(model, f, "bermudan")).value
