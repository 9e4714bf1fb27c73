"""Training protocol, extrapolation, ensembles and sensitivities.

One model is trained per sex on log-rates of all ages at once; each age is
an independent series fed through the same cell.
"""

from __future__ import annotations

import itertools
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import neural
from .data_io import ForecastEnsemble, LogRateSurface
from .errors import (
    DegenerateMatrix,
    EmptyDataset,
    HorizonInPast,
    InvalidSpec,
    SurfaceTooShort,
    TrainingDiverged,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    input_size: int = 40
    depth: int = 6
    hidden_width: int = 64
    n_train: int = 10
    batch_size: int = 16
    interval: int = 10_000
    lr0: float = 1e-4
    lr_decay: float = 0.9
    steps: int = 270_000
    b_init: float = 0.1
    sigma_init: float = 0.1
    rms_decay: float = 0.9
    rms_eps: float = 1e-10
    stop_gradient: bool = False

    def __post_init__(self):
        if not 0 < self.lr_decay < 1:
            raise InvalidSpec("lr_decay must lie in (0, 1)")
        if self.interval < 1 or self.steps < self.interval or self.steps % self.interval:
            raise InvalidSpec("steps must be a positive multiple of interval")
        if self.batch_size < 1 or self.n_train < 1:
            raise InvalidSpec("batch_size and n_train must be >= 1")
        if self.lr0 <= 0:
            raise InvalidSpec("lr0 must be positive")

    @property
    def spec(self) -> neural.CellSpec:
        return neural.CellSpec(self.input_size, self.depth, self.hidden_width)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class AgeSplit:
    validation: tuple[int, ...]
    test: tuple[int, ...]
    training: tuple[int, ...]

    @classmethod
    def standard(cls, max_age: int = 100) -> "AgeSplit":
        """Every fifth age from 1 for validation, from 2 for test, the rest for training."""
        val = tuple(range(1, max_age + 1, 5))
        test = tuple(range(2, max_age + 1, 5))
        taken = set(val) | set(test)
        train = tuple(a for a in range(max_age + 1) if a not in taken)
        return cls(val, test, train)


@dataclass(frozen=True)
class Sequences:
    """Training pairs: ``windows[n]`` of N log-rates, ``targets[n]`` of the next N_train."""

    windows: np.ndarray
    targets: np.ndarray
    ages: np.ndarray
    first_target_year: np.ndarray

    def __len__(self) -> int:
        return self.windows.shape[0]


def sequences_per_age(n_years: int, input_size: int, n_train: int) -> int:
    return max(0, n_years - input_size - n_train + 1)


def make_training_sequences(x: LogRateSurface, input_size: int, n_train: int, ages=None) -> Sequences:
    n_years = x.n_years
    if n_years < input_size + n_train:
        raise SurfaceTooShort(
            f"{n_years} years cannot hold a window of {input_size} plus {n_train} targets"
        )
    ages = list(range(x.max_age + 1)) if ages is None else sorted(ages)
    starts = range(input_size, n_years - n_train + 1)
    windows, targets, age_col, years = [], [], [], []
    for i in ages:
        series = x.x[:, i]
        for s in starts:
            windows.append(series[s - input_size:s])
            targets.append(series[s:s + n_train])
            age_col.append(i)
            years.append(x.first_year + s)
    return Sequences(
        np.array(windows).reshape(-1, input_size),
        np.array(targets).reshape(-1, n_train),
        np.array(age_col, dtype=int),
        np.array(years, dtype=int),
    )


@dataclass
class TrainedModel:
    cell: neural.DenseCell
    config: TrainConfig
    seed: int
    loss_history: list[float] = field(default_factory=list)
    lr_history: list[float] = field(default_factory=list)
    checkpoint_loss: list[float] = field(default_factory=list)
    validation_loss: list[float] = field(default_factory=list)


def train(cfg: TrainConfig, data: Sequences, seed: int, validation: Sequences | None = None) -> TrainedModel:
    """Run ``cfg.steps`` RMSProp steps on mini-batches drawn with replacement.

    After each interval the mean mini-batch loss of that interval is compared
    with the previous one; unless it is strictly lower the learning rate is
    multiplied by ``cfg.lr_decay``.
    """
    if len(data) == 0:
        raise EmptyDataset("no training sequences")
    if data.windows.shape[1] != cfg.input_size or data.targets.shape[1] != cfg.n_train:
        raise InvalidSpec("sequences were built for a different N or N_train")
    cell = neural.init_cell(cfg.spec, cfg.b_init, cfg.sigma_init, seed)
    state = neural.RmsPropState.fresh(cell, cfg.lr0, cfg.rms_decay, cfg.rms_eps)
    rng = np.random.default_rng([seed, 1])
    model = TrainedModel(cell, cfg, seed)
    n = len(data)
    previous = None
    for window in range(cfg.steps // cfg.interval):
        batches = rng.integers(0, n, size=(cfg.interval, cfg.batch_size))
        total = 0.0
        for idx in batches:
            value, g = neural.backward(cell, data.windows[idx], data.targets[idx], cfg.stop_gradient)
            if not np.isfinite(value) or not g.all_finite():
                raise TrainingDiverged(
                    f"non-finite loss at step {window * cfg.interval} (seed {seed})"
                )
            neural.rmsprop_update_(state, cell, g)
            total += value
        mean = total / cfg.interval
        model.loss_history.append(mean)
        model.lr_history.append(state.learning_rate)
        full = neural.loss(cell, data.windows, data.targets)
        if not np.isfinite(full):
            raise TrainingDiverged(f"training-set loss diverged after window {window} (seed {seed})")
        model.checkpoint_loss.append(full)
        if validation is not None and len(validation):
            model.validation_loss.append(neural.loss(cell, validation.windows, validation.targets))
        if previous is not None and mean >= previous:
            state.learning_rate *= cfg.lr_decay
        previous = mean
        log.debug("seed %d window %d: loss %.6g lr %.3g", seed, window, mean, state.learning_rate)
    return model


def next_learning_rate(lr: float, previous_mean: float, current_mean: float, factor: float) -> float:
    """The interval rule on its own: ties count as no improvement."""
    return lr * factor if current_mean >= previous_mean else lr


@dataclass(frozen=True)
class TuneResult:
    input_size: int
    depth: int
    hidden_width: int
    n_params: int
    min_validation_loss: float
    min_validation_step: int
    final_validation_loss: float
    seed: int
    validation_curve: tuple[float, ...] = ()


def select_best(results: list[TuneResult]) -> TuneResult:
    if not results:
        raise EmptyDataset("empty tuning report")
    return min(results, key=lambda r: (r.min_validation_loss, r.n_params))


def tune(
    x: LogRateSurface,
    split: AgeSplit,
    base: TrainConfig,
    inputs=(15, 25, 40),
    depths=range(3, 8),
    widths=(32, 64, 128, 256, 512),
    steps: int = 300_000,
    master_seed: int = 0,
) -> tuple[TrainConfig, list[TuneResult]]:
    """Grid search scored on validation ages.

    Grid point ``g`` (in N, K, H order) trains with seed ``master_seed + g``.
    The chosen config carries the step count at which its validation loss
    was lowest.
    """
    results = []
    for g, (n_in, depth, width) in enumerate(itertools.product(inputs, depths, widths)):
        cfg = replace(base, input_size=n_in, depth=depth, hidden_width=width, steps=steps)
        tr = make_training_sequences(x, n_in, cfg.n_train, split.training)
        val = make_training_sequences(x, n_in, cfg.n_train, split.validation)
        model = train(cfg, tr, master_seed + g, validation=val)
        curve = model.validation_loss
        best = int(np.argmin(curve))
        results.append(TuneResult(
            n_in, depth, width, cfg.spec.n_params, float(curve[best]),
            (best + 1) * cfg.interval, float(curve[-1]), master_seed + g, tuple(curve),
        ))
    winner = select_best(results)
    chosen = replace(
        base, input_size=winner.input_size, depth=winner.depth,
        hidden_width=winner.hidden_width, steps=winner.min_validation_step,
    )
    return chosen, results


@dataclass(frozen=True)
class FinalReport:
    train_loss: float
    test_loss: float
    test_bias: float


def final_protocol(cfg: TrainConfig, x: LogRateSurface, split: AgeSplit, seed: int):
    """Retrain on training plus validation ages and score the held-out test ages."""
    ages = sorted(set(split.training) | set(split.validation))
    data = make_training_sequences(x, cfg.input_size, cfg.n_train, ages)
    test = make_training_sequences(x, cfg.input_size, cfg.n_train, split.test)
    model = train(cfg, data, seed)
    outs = neural.rollout(model.cell, test.windows, cfg.n_train)
    report = FinalReport(
        train_loss=neural.loss(model.cell, data.windows, data.targets),
        test_loss=float(np.mean(np.sum((outs - test.targets) ** 2, axis=1))),
        test_bias=float(np.mean(outs - test.targets)),
    )
    return model, report


def _cell_of(model) -> neural.DenseCell:
    return model.cell if isinstance(model, TrainedModel) else model


def extrapolate(model, x: LogRateSurface, horizon: int, ages=None) -> np.ndarray:
    """Forecast q for years last_year+1..horizon, shape (years, ages)."""
    cell = _cell_of(model)
    if horizon <= x.last_year:
        raise HorizonInPast(f"horizon {horizon} is not after the last data year {x.last_year}")
    n_in = cell.spec.input_size
    if x.n_years < n_in:
        raise SurfaceTooShort(f"need {n_in} historical years, have {x.n_years}")
    ages = list(range(x.max_age + 1)) if ages is None else list(ages)
    windows = x.x[-n_in:, ages].T
    outs = neural.rollout(cell, windows, horizon - x.last_year)
    return np.exp(outs.T)


def _train_one(args):
    cfg, data, seed = args
    return train(cfg, data, seed)


def train_ensemble(cfg: TrainConfig, x: LogRateSurface, runs: int, base_seed: int, workers: int = 1):
    """Train ``runs`` models with seeds base_seed + r, returned in run order."""
    if runs < 1:
        raise InvalidSpec("runs must be >= 1")
    data = make_training_sequences(x, cfg.input_size, cfg.n_train)
    jobs = [(cfg, data, base_seed + r) for r in range(runs)]
    if workers <= 1 or runs == 1:
        return [_train_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_train_one, jobs))


def ensemble_from_models(models, x: LogRateSurface, horizon: int) -> ForecastEnsemble:
    runs = np.stack([extrapolate(m, x, horizon) for m in models])
    return ForecastEnsemble.from_runs(x.sex, x.last_year + 1, runs)


def ensemble_forecast(cfg: TrainConfig, x: LogRateSurface, runs: int, horizon: int,
                      base_seed: int, workers: int = 1) -> ForecastEnsemble:
    if horizon <= x.last_year:
        raise HorizonInPast(f"horizon {horizon} is not after the last data year {x.last_year}")
    models = train_ensemble(cfg, x, runs, base_seed, workers)
    return ensemble_from_models(models, x, horizon)


def default_workers(requested: int | None = None) -> int:
    """Worker count, capped by the MORTSIM_MAX_WORKERS environment variable."""
    n = requested or 1
    cap = os.environ.get("MORTSIM_MAX_WORKERS")
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


@dataclass(frozen=True)
class SensitivityMatrix:
    """``values[r, c]`` = d q(rows[r]) / d q(cols[c]) for one age."""

    age: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def lags(self) -> np.ndarray:
        return self.rows[:, None] - self.cols[None, :]


def sensitivity_matrix(model, x: LogRateSurface, age: int, horizon: int) -> SensitivityMatrix:
    """Sensitivity of forecast q to the historical q in the model's input window.

    Computed as (q_t / q_t') * d x_t / d x_t' with the x-space Jacobian taken
    through the whole recursion.
    """
    cell = _cell_of(model)
    if horizon <= x.last_year:
        raise HorizonInPast(f"horizon {horizon} is not after the last data year {x.last_year}")
    n_in = cell.spec.input_size
    xi = x.x[-n_in:, age]
    k = horizon - x.last_year
    jac = neural.input_jacobian(cell, xi, k)
    q_out = np.exp(neural.rollout(cell, xi, k))
    q_in = np.exp(xi)
    rows = np.arange(x.last_year + 1, horizon + 1)
    cols = np.arange(x.last_year - n_in + 1, x.last_year + 1)
    return SensitivityMatrix(age, rows, cols, q_out[:, None] / q_in[None, :] * jac)


@dataclass(frozen=True)
class ReversionSummary:
    lags: np.ndarray
    weights: np.ndarray
    diagonal_variance: float
    near_sum: float
    far_sum: float
    statistic: float
    reverting: bool


def mean_reversion_summary(s: SensitivityMatrix, near: int = 16, far: int = 32,
                           max_lag: int | None = None) -> ReversionSummary:
    """Average the matrix along diagonals into per-lag weights s_j.

    ``statistic`` is sum(s_j, near < j <= far) - sum(s_j, j <= near): positive
    when recent history pushes the forecast down and older history pushes it
    up. ``reverting`` requires a negative mean over the near lags and a
    positive mean over the far lags.
    """
    lag_grid = s.lags()
    lags = np.unique(lag_grid[lag_grid >= 1])
    if max_lag is not None:
        lags = lags[lags <= max_lag]
    if lags.size < 2:
        raise DegenerateMatrix("need at least two diagonals")
    weights = np.array([s.values[lag_grid == j].mean() for j in lags])
    variances = [s.values[lag_grid == j].var() for j in lags]
    near_mask = lags <= near
    far_mask = (lags > near) & (lags <= far)
    near_sum = float(weights[near_mask].sum())
    far_sum = float(weights[far_mask].sum())
    reverting = bool(
        near_mask.any() and far_mask.any()
        and weights[near_mask].mean() < 0 and weights[far_mask].mean() > 0
    )
    return ReversionSummary(lags, weights, float(np.mean(variances)), near_sum, far_sum,
                            far_sum - near_sum, reverting)
