"""Discretized worked examples and the projection/reparameterization tools."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import gammaln

from .bounds import AsymptoticSpec
from .core import DiscreteModel, check_model
from .risk import bayes_decisions, distortion_matrix, is_quadratic_loss


def _midpoints(lo: float, hi: float, count: int) -> np.ndarray:
    step = (hi - lo) / count
    return lo + step * (np.arange(count) + 0.5)


def _binned_normal(centres: np.ndarray, grid: np.ndarray, sigma: float) -> np.ndarray:
    """Rows ``P(y | centre)``: normal density at each bin midpoint, renormalized."""
    z = (grid[None, :] - centres[:, None]) / sigma
    logp = -0.5 * z**2
    logp -= logp.max(axis=1, keepdims=True)
    p = np.exp(logp)
    return p / p.sum(axis=1, keepdims=True)


def _square_loss(values: np.ndarray) -> np.ndarray:
    return (values[:, None] - values[None, :]) ** 2


# --- Gaussian location ------------------------------------------------------------


@dataclass(frozen=True)
class GaussianLocationSpec:
    """``Y = W + V`` with ``V ~ N(0, sigma^2)`` and ``W ~ Unif(w_support)``."""

    sigma: float
    w_grid: int
    y_grid: int
    w_support: tuple[float, float] = (0.0, 1.0)
    y_support: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if self.w_grid < 2 or self.y_grid < 2:
            raise ValueError("grids must have at least 2 points")
        lo, hi = self.w_support
        if not lo < hi:
            raise ValueError("w_support must be ordered")
        ylo, yhi = self.resolved_y_support
        if not ylo < yhi:
            raise ValueError("y_support must be ordered")

    @property
    def resolved_y_support(self) -> tuple[float, float]:
        if self.y_support is not None:
            return tuple(self.y_support)
        lo, hi = self.w_support
        return lo - 4 * self.sigma, hi + 4 * self.sigma


def discretize_gaussian_location(spec: GaussianLocationSpec) -> tuple[DiscreteModel, AsymptoticSpec]:
    """Uniform prior on ``w_grid`` cell midpoints, midpoint-binned Gaussian noise.

    ``X`` is a single point. The loss is the squared difference of the ``Y``
    bin midpoints and ``b`` is the squared width of the ``Y`` support.
    """
    lo, hi = spec.w_support
    ylo, yhi = spec.resolved_y_support
    w = _midpoints(lo, hi, spec.w_grid)
    y = _midpoints(ylo, yhi, spec.y_grid)
    pyw = _binned_normal(w, y, spec.sigma)
    model = DiscreteModel(
        prior_w=np.full(spec.w_grid, 1.0 / spec.w_grid),
        px=np.ones(1),
        py_given_xw=pyw[:, None, :],
        loss=_square_loss(y),
        b=(yhi - ylo) ** 2,
        y_values=y,
        name=f"gaussian_location(sigma={spec.sigma:g}, w_grid={spec.w_grid}, y_grid={spec.y_grid})",
    )
    asym = AsymptoticSpec(p=1, diff_entropy_h_w=math.log(hi - lo), expected_log_det_fisher=math.log(1 / spec.sigma**2),
                          v_p=2.0, gamma=1.0, c=1 / spec.sigma**2)
    return check_model(model), asym


# --- linear regression ------------------------------------------------------------


@dataclass(frozen=True)
class LinearRegressionSpec:
    """``Y = W^T X + sigma * nu`` with ``X ~ N(0, sigma_x)`` and ``W`` uniform on a box.

    ``X`` is discretized on a grid of ``x_grid`` points per axis over
    ``[-x_radius, x_radius]`` in whitened coordinates, then mapped through the
    Cholesky factor of ``sigma_x``. ``Y`` bins have width ``y_step``.
    """

    p: int
    sigma: float
    sigma_x: tuple
    w_low: float = -1.0
    w_high: float = 1.0
    w_grid: int = 21
    x_grid: int = 5
    x_radius: float = 2.0
    y_step: float = 0.1

    def __post_init__(self):
        if self.p not in (1, 2):
            raise ValueError("only p = 1 or p = 2 is supported")
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        sx = self.covariance
        if sx.shape != (self.p, self.p):
            raise ValueError(f"sigma_x must be {self.p}x{self.p}")
        if not np.allclose(sx, sx.T):
            raise ValueError("sigma_x must be symmetric")
        if np.linalg.eigvalsh(sx).min() <= 0:
            raise ValueError("sigma_x must be positive definite")
        if not self.w_low < self.w_high:
            raise ValueError("w support must be ordered")
        if self.w_grid < 2 or self.x_grid < 1:
            raise ValueError("grids too small")
        if not (self.x_radius > 0 and self.y_step > 0):
            raise ValueError("x_radius and y_step must be > 0")

    @property
    def covariance(self) -> np.ndarray:
        return np.atleast_2d(np.asarray(self.sigma_x, dtype=float))


@dataclass(frozen=True)
class RegressionGrid:
    """Coordinates behind a discretized regression model."""

    w_points: np.ndarray  # (K, p)
    x_points: np.ndarray  # (X, p)
    second_moment: np.ndarray  # E[X X^T] under the discrete input law
    extra: dict = field(default_factory=dict)


def discretize_linear_regression(spec: LinearRegressionSpec) -> tuple[DiscreteModel, AsymptoticSpec, RegressionGrid]:
    """Discrete linear-regression model with the constants of the ``p/n`` lower bound.

    The norm matrix is the second moment ``M = E[X X^T]`` of the discrete input
    law, so ``d'(w, w') = (w - w')^T M (w - w')`` holds for the model itself.
    Then ``gamma`` is the smallest eigenvalue of ``M``, the Fisher information
    is ``M / sigma^2`` and ``c`` is its largest diagonal entry.
    """
    p = spec.p
    u = np.linspace(-spec.x_radius, spec.x_radius, spec.x_grid) if spec.x_grid > 1 else np.zeros(1)
    pu = np.exp(-0.5 * u**2)
    pu /= pu.sum()
    grids = np.meshgrid(*([u] * p), indexing="ij")
    upts = np.stack([g.ravel() for g in grids], axis=1)
    px = np.prod(np.stack(np.meshgrid(*([pu] * p), indexing="ij"), axis=0).reshape(p, -1), axis=0)
    chol = np.linalg.cholesky(spec.covariance)
    xpts = upts @ chol.T
    wa = _midpoints(spec.w_low, spec.w_high, spec.w_grid)
    wg = np.meshgrid(*([wa] * p), indexing="ij")
    wpts = np.stack([g.ravel() for g in wg], axis=1)
    means = wpts @ xpts.T  # (K, X)
    ymax = np.abs(means).max() + 4 * spec.sigma
    ny = int(math.ceil(2 * ymax / spec.y_step))
    y = _midpoints(-ny * spec.y_step / 2, ny * spec.y_step / 2, ny)
    pyxw = _binned_normal(means.ravel(), y, spec.sigma).reshape(len(wpts), len(xpts), ny)
    model = DiscreteModel(
        prior_w=np.full(len(wpts), 1.0 / len(wpts)),
        px=px,
        py_given_xw=pyxw,
        loss=_square_loss(y),
        b=float((y[-1] - y[0]) ** 2),
        y_values=y,
        name=f"linear_regression(p={p}, sigma={spec.sigma:g}, w_grid={spec.w_grid}, x_grid={spec.x_grid})",
    )
    m2 = (xpts * px[:, None]).T @ xpts
    fisher = m2 / spec.sigma**2
    v_p = math.exp(-0.5 * math.log(np.linalg.det(m2)) + 0.5 * p * math.log(math.pi) - gammaln(1 + p / 2))
    asym = AsymptoticSpec(
        p=p,
        diff_entropy_h_w=p * math.log(spec.w_high - spec.w_low),
        expected_log_det_fisher=float(np.linalg.slogdet(fisher)[1]),
        v_p=v_p,
        gamma=float(np.linalg.eigvalsh(m2).min()),
        c=float(np.diag(fisher).max()),
    )
    return check_model(model), asym, RegressionGrid(w_points=wpts, x_points=xpts, second_moment=m2)


# --- the loss-blind counterexample ----------------------------------------------


def toy_counterexample(levels: int = 3, a1: float = 0.0, a2: float = 1.0, noise_levels: int = 3,
                       c1: float = 1.0, c2: float = 0.0) -> DiscreteModel:
    """Two-coordinate location model whose loss can ignore the second coordinate.

    ``W1, W2`` are uniform on ``levels`` points of ``[-1, 1]``, the noise
    ``eps_i`` is uniform on ``noise_levels`` points of ``[-a_i, a_i]`` and
    ``Y = (W1 + eps1, W2 + eps2)``. The loss is
    ``c1 (y1 - y1')^2 + c2 (y2 - y2')^2``. With ``a1 = 0`` and ``c2 = 0`` one
    sample reveals everything the loss cares about.
    """
    w = np.linspace(-1, 1, levels)
    e1 = np.linspace(-a1, a1, noise_levels) if a1 > 0 else np.zeros(1)
    e2 = np.linspace(-a2, a2, noise_levels) if a2 > 0 else np.zeros(1)
    y1 = np.unique(np.round((w[:, None] + e1[None, :]).ravel(), 12))
    y2 = np.unique(np.round((w[:, None] + e2[None, :]).ravel(), 12))
    idx1 = {v: i for i, v in enumerate(y1)}
    idx2 = {v: i for i, v in enumerate(y2)}
    n_y = len(y1) * len(y2)
    pyw = np.zeros((levels * levels, n_y))
    for i, w1 in enumerate(w):
        for j, w2 in enumerate(w):
            for a in e1:
                for b in e2:
                    k = idx1[round(w1 + a, 12)] * len(y2) + idx2[round(w2 + b, 12)]
                    pyw[i * levels + j, k] += 1.0 / (len(e1) * len(e2))
    v1 = np.repeat(y1, len(y2))
    v2 = np.tile(y2, len(y1))
    loss = c1 * (v1[:, None] - v1[None, :]) ** 2 + c2 * (v2[:, None] - v2[None, :]) ** 2
    model = DiscreteModel(
        prior_w=np.full(levels * levels, 1.0 / levels**2),
        px=np.ones(1),
        py_given_xw=pyw[:, None, :],
        loss=loss,
        b=float(loss.max()),
        name=f"toy(levels={levels}, a1={a1:g}, a2={a2:g}, c1={c1:g}, c2={c2:g})",
    )
    return check_model(model)


# --- reparameterization and projection ------------------------------------------


class ReparameterizationError(ValueError):
    """The supplied maps do not reproduce the distortion."""


@dataclass(frozen=True)
class ReparameterizedProblem:
    source: np.ndarray  # law of V = f(source symbol)
    dist: np.ndarray  # d'(v, v_hat)
    f: np.ndarray
    g: np.ndarray


def reparameterize_distortion(source, dist, f, g, tol: float = 1e-12) -> ReparameterizedProblem:
    """Rewrite a rate-distortion problem through ``V = f(X)`` and ``V_hat = g(X_hat)``.

    The reduced distortion ``d'`` is read off ``dist`` and must satisfy
    ``d(x, x_hat) = d'(f(x), g(x_hat))`` for every pair. ``g`` must be onto
    the reduced reproduction alphabet so that every ``v_hat`` can be realized.
    """
    source = np.asarray(source, float)
    dist = np.asarray(dist, float)
    f = np.asarray(f, dtype=np.int64)
    g = np.asarray(g, dtype=np.int64)
    if f.shape != (dist.shape[0],) or g.shape != (dist.shape[1],):
        raise ReparameterizationError("map lengths must match the distortion matrix")
    n_v, n_vh = int(f.max()) + 1, int(g.max()) + 1
    missing = sorted(set(range(n_vh)) - set(g.tolist()))
    if missing:
        raise ReparameterizationError(f"g is not onto: reduced symbol {missing[0]} has no preimage")
    dprime = np.full((n_v, n_vh), np.nan)
    for x in range(dist.shape[0]):
        for xh in range(dist.shape[1]):
            v, vh = f[x], g[xh]
            if np.isnan(dprime[v, vh]):
                dprime[v, vh] = dist[x, xh]
            elif abs(dprime[v, vh] - dist[x, xh]) > tol * max(1.0, abs(dist[x, xh])):
                raise ReparameterizationError(
                    f"d({x}, {xh}) = {dist[x, xh]:g} but the pair ({v}, {vh}) already has {dprime[v, vh]:g}")
    if np.isnan(dprime).any():
        v, vh = np.argwhere(np.isnan(dprime))[0]
        raise ReparameterizationError(f"f is not onto: reduced pair ({v}, {vh}) is never realized")
    src_v = np.bincount(f, weights=source, minlength=n_v)
    return ReparameterizedProblem(source=src_v, dist=dprime, f=f, g=g)


def relabel_problem(source, dist, perm) -> tuple[np.ndarray, np.ndarray]:
    """Apply a bijection to the source alphabet."""
    perm = np.asarray(perm, dtype=np.int64)
    inv = np.argsort(perm)
    return np.asarray(source)[inv], np.asarray(dist)[inv]


def hypothesis_values(model: DiscreteModel, tables=None) -> np.ndarray:
    """Real-valued prediction functions ``x -> y_values[h(x)]``; defaults to the Bayes tables."""
    if model.y_values is None:
        raise ValueError("model has no y_values")
    tables = bayes_decisions(model) if tables is None else np.atleast_2d(tables)
    return model.y_values[tables]


def conditional_means(model: DiscreteModel) -> np.ndarray:
    """``E[Y | x, w]``, shape ``(K, X)``."""
    if model.y_values is None:
        raise ValueError("model has no y_values")
    return model.py_given_xw @ model.y_values


def l2_distortion(model: DiscreteModel, tables) -> np.ndarray:
    """``||mu_w - h||^2 - ||mu_w - h*_w||^2`` in ``L2(P_X)`` for quadratic loss.

    ``mu_w`` is the regression function. When every ``mu_w`` is itself an
    action on the grid this is ``||h*_w - h||^2``.
    """
    if not is_quadratic_loss(model):
        raise ValueError("needs quadratic loss")
    mu = conditional_means(model)
    hv = hypothesis_values(model, tables)
    hstar = hypothesis_values(model)
    return ((hv[None, :, :] - mu[:, None, :]) ** 2 - (hstar - mu)[:, None, :] ** 2) @ model.px


def project_to_hypothesis_class(model: DiscreteModel, h) -> int:
    """Index ``w`` of the Bayes function ``h*_w`` nearest to ``h`` in ``L2(P_X)``.

    ``h`` is either a table of ``Y`` indices or a real-valued function on
    ``X``. The candidate set is the finite family ``{h*_w}``; ties go to the
    smallest index.
    """
    if not is_quadratic_loss(model):
        raise ValueError("projection needs quadratic loss")
    h = np.asarray(h)
    hv = model.y_values[h] if np.issubdtype(h.dtype, np.integer) else h.astype(float)
    cand = hypothesis_values(model)
    dist = ((cand - hv[None, :]) ** 2) @ model.px
    return int(np.argmax(dist <= dist.min() * (1 + 1e-12) + 1e-300))


def projected_problem(model: DiscreteModel) -> ReparameterizedProblem:
    """Rate-distortion problem on the parameter alphabet after projecting onto the Bayes functions.

    The reproduction alphabet is ``{h*_w'}``; the distortion is
    ``d(w, h*_w')``. Duplicate Bayes functions are merged.
    """
    hstar = bayes_decisions(model)
    _, first = np.unique(hstar, axis=0, return_index=True)
    tables = hstar[np.sort(first)]
    d = distortion_matrix(model, tables)
    return ReparameterizedProblem(source=np.asarray(model.prior_w), dist=d, f=np.arange(model.n_w),
                                  g=np.arange(len(tables)))


# --- instance files ---------------------------------------------------------------


def instance_from_json(data: dict):
    """Build ``(model, asymptotic spec)`` from an instance description."""
    data = dict(data)
    kind = data.pop("kind", None)
    if kind == "gaussian_location":
        for key in ("w_support", "y_support"):
            if data.get(key) is not None:
                data[key] = tuple(data[key])
        return discretize_gaussian_location(GaussianLocationSpec(**data))
    if kind == "linear_regression":
        data["sigma_x"] = tuple(map(tuple, np.atleast_2d(data["sigma_x"]).tolist()))
        model, asym, _ = discretize_linear_regression(LinearRegressionSpec(**data))
        return model, asym
    if kind == "toy":
        return toy_counterexample(**data), None
    raise ValueError(f"unknown instance kind {kind!r}")


def load_instance(path):
    return instance_from_json(json.loads(Path(path).read_text()))
