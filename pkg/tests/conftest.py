import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mortsim import neural, synthetic

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def fixture_files(tmp_path_factory):
    """Synthetic input CSVs plus small.cfg, written once per session."""
    d = tmp_path_factory.mktemp("fixtures")
    paths = synthetic.write_fixtures(d, seed=0)
    return d, paths


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_cell(seed: int, n: int = 4, k: int = 3, h: int = 5, sigma: float = 0.5) -> neural.DenseCell:
    """Cell with random biases as well as weights, so ReLU regions vary."""
    cell = neural.init_cell(neural.CellSpec(n, k, h), 0.1, sigma, seed)
    r = np.random.default_rng(seed + 1000)
    for b in cell.biases:
        b[...] = r.normal(0.0, 0.3, b.shape)
    return cell


def constant_cell(n: int, value: float, k: int = 3, h: int = 4) -> neural.DenseCell:
    spec = neural.CellSpec(n, k, h)
    d = spec.dims
    ws = [np.zeros((d[i + 1], d[i])) for i in range(len(d) - 1)]
    bs = [np.zeros(d[i + 1]) for i in range(len(d) - 1)]
    bs[-1][:] = value
    return neural.DenseCell(spec, ws, bs)


def relu_margin(cell: neural.DenseCell, windows: np.ndarray, k: int) -> float:
    """Smallest |hidden pre-activation| met along the rollout; small means near a kink."""
    _, cache = neural._rollout_cached(cell, np.atleast_2d(windows), k)
    hidden = [np.abs(p).min() for _, pre in cache for p in pre[:-1]]
    return min(hidden) if hidden else np.inf


def fd_gradient(cell: neural.DenseCell, windows, targets, h: float = 1e-5) -> np.ndarray:
    theta = cell.flat()
    out = np.empty_like(theta)
    for i in range(theta.size):
        up, down = theta.copy(), theta.copy()
        up[i] += h
        down[i] -= h
        out[i] = (neural.loss(cell.with_flat(up), windows, targets)
                  - neural.loss(cell.with_flat(down), windows, targets)) / (2 * h)
    return out


def gradients_match(analytic: np.ndarray, numeric: np.ndarray, rel: float = 1e-4, abs_: float = 1e-7) -> bool:
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    return bool(np.all((diff <= abs_) | (diff <= rel * scale)))


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
