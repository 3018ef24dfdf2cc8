"""Seeded model generators shared by the unit and acceptance tests."""

from __future__ import annotations

import numpy as np

from merrd import DiscreteModel

BATTERY_SEED = 20240611
BATTERY_SIZE = 20


def zero_one(k: int) -> np.ndarray:
    return 1.0 - np.eye(k)


def random_model(rng: np.random.Generator, n_w: int, n_x: int, n_y: int, loss: str = "zero_one",
                 concentration: float = 0.7, name: str = "") -> DiscreteModel:
    """Dirichlet-drawn model with a 0-1, absolute or squared loss on ``Y = {0, ..., |Y|-1}``."""
    prior = rng.dirichlet(np.ones(n_w))
    px = rng.dirichlet(np.ones(n_x))
    pyx = rng.dirichlet(np.full(n_y, concentration), size=(n_w, n_x))
    y = np.arange(n_y, dtype=float)
    if loss == "zero_one":
        lmat = zero_one(n_y)
    elif loss == "absolute":
        lmat = np.abs(y[:, None] - y[None, :])
    elif loss == "squared":
        lmat = (y[:, None] - y[None, :]) ** 2
    else:
        raise ValueError(loss)
    return DiscreteModel(prior_w=prior, px=px, py_given_xw=pyx, loss=lmat, b=float(lmat.max()), y_values=y,
                         name=name)


def battery(size: int = BATTERY_SIZE, seed: int = BATTERY_SEED) -> list[tuple[DiscreteModel, int]]:
    """Randomised ``(model, n)`` pairs with ``|W| <= 4``, ``|X| <= 3``, ``|Y| <= 3`` and ``n <= 3``."""
    rng = np.random.default_rng(seed)
    losses = ("zero_one", "absolute", "squared")
    out = []
    for i in range(size):
        n_w = int(rng.integers(2, 5))
        n_x = int(rng.integers(1, 4))
        n_y = int(rng.integers(2, 4))
        n = 1 + i % 3
        out.append((random_model(rng, n_w, n_x, n_y, losses[i % 3], name=f"battery-{i}"), n))
    return out


def model_2x2x2() -> DiscreteModel:
    return DiscreteModel(prior_w=[0.5, 0.5], px=[0.6, 0.4],
                         py_given_xw=[[[0.9, 0.1], [0.3, 0.7]], [[0.2, 0.8], [0.6, 0.4]]],
                         loss=zero_one(2), b=1.0, name="2x2x2")


def noiseless_model(rng: np.random.Generator, n_w: int, n_x: int, n_y: int) -> DiscreteModel:
    """``Y`` a deterministic function of ``(X, W)`` with distinct parameter rows where possible."""
    tables = rng.integers(0, n_y, size=(n_w, n_x))
    pyx = np.zeros((n_w, n_x, n_y))
    pyx[np.arange(n_w)[:, None], np.arange(n_x)[None, :], tables] = 1.0
    return DiscreteModel(prior_w=rng.dirichlet(np.ones(n_w)), px=rng.dirichlet(np.ones(n_x)), py_given_xw=pyx,
                         loss=zero_one(n_y), b=1.0, name="noiseless")


def metric_model(rng: np.random.Generator, y_values, n_w: int = 3, n_x: int = 2) -> DiscreteModel:
    """Absolute-value loss on real ``Y`` points, so the loss is a metric."""
    y = np.asarray(y_values, float)
    lmat = np.abs(y[:, None] - y[None, :])
    pyx = rng.dirichlet(np.full(y.size, 0.8), size=(n_w, n_x))
    return DiscreteModel(prior_w=rng.dirichlet(np.ones(n_w)), px=rng.dirichlet(np.ones(n_x)), py_given_xw=pyx,
                         loss=lmat, b=float(lmat.max()), y_values=y, name="metric")


# acceptance lines keyed by criterion number, echoed by the terminal summary hook
ACCEPTANCE_LINES: dict[int, str] = {}


def record(k: int, ok: bool, detail: str) -> str:
    line = f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE_LINES[k] = line
    return line
