"""Exact and Monte Carlo mutual information, all in nats."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DatasetLaw, DiscreteModel, build_dataset_law
from .risk import MC_BATCH, McTables, _mean_stderr, batch_streams, posterior, sample_posteriors

CROSSCHECK_TOL = 1e-9


@dataclass(frozen=True)
class MiResult:
    value: float
    method: str = "exact"
    mc_stderr: float | None = None
    infinite: bool = False

    def __float__(self) -> float:
        return math.inf if self.infinite else self.value


def kl_terms(p, q) -> tuple[np.ndarray, bool]:
    """Elementwise ``p log(p/q)`` with ``0 log(0/q) = 0``.

    The flag is true when some ``p > 0`` meets ``q = 0``; those terms are
    reported as zero so that the caller can decide how to surface infinity.
    """
    p = np.asarray(p, dtype=float)
    q = np.broadcast_to(np.asarray(q, dtype=float), p.shape)
    pos = p > 0
    bad = pos & (q <= 0)
    ok = pos & ~bad
    out = np.zeros(p.shape)
    out[ok] = p[ok] * (np.log(p[ok]) - np.log(q[ok]))
    return out, bool(bad.any())


def _clip(value: float) -> float:
    # rounding can leave a tiny negative total; larger negatives stay visible
    return 0.0 if -1e-15 < value < 0 else value


def compensated_sum(values) -> float:
    return math.fsum(np.ravel(values).tolist())


def kl_divergence(p, q) -> MiResult:
    terms, inf = kl_terms(p, q)
    if inf:
        return MiResult(math.inf, infinite=True)
    return MiResult(compensated_sum(terms))


def mi_exact(joint) -> MiResult:
    """``I(A; B) = KL(P_AB || P_A x P_B)`` for a 2-D joint table."""
    joint = np.asarray(joint, dtype=float)
    pa = joint.sum(axis=1)
    pb = joint.sum(axis=0)
    terms, inf = kl_terms(joint, pa[:, None] * pb[None, :])
    if inf:  # impossible for a genuine joint, kept for malformed input
        return MiResult(math.inf, infinite=True)
    return MiResult(_clip(compensated_sum(terms)))


def mi_channel_pair(prior, chan) -> MiResult:
    """Mutual information between the input and output of ``chan`` under ``prior``."""
    prior = np.asarray(prior, dtype=float)
    return mi_exact(prior[:, None] * np.asarray(chan, dtype=float))


def _law(model, n, law, cap):
    return build_dataset_law(model, n, cap=cap, mode="type") if law is None else law


def mi_w_zn(model: DiscreteModel, n: int, law: DatasetLaw | None = None, cap: int | None = None) -> MiResult:
    """``I(W; Z^n)``, computed as a joint KL and as an expected posterior KL.

    The two forms must agree within ``1e-9``; a mismatch raises.
    """
    law = _law(model, n, law, cap)
    joint_form = mi_channel_pair(model.prior_w, law.p_zn_given_w)
    post = posterior(model, law)
    terms, inf = kl_terms(post.probs, model.prior_w[None, :])
    if inf:
        raise ArithmeticError("posterior puts mass where the prior has none")
    post_form = compensated_sum(law.p_zn[:, None] * terms)
    if abs(joint_form.value - post_form) > CROSSCHECK_TOL:
        raise ArithmeticError(f"I(W;Z^n) forms disagree: {joint_form.value!r} vs {post_form!r}")
    return joint_form


def predictive_y(model: DiscreteModel, post: np.ndarray) -> np.ndarray:
    """Posterior predictive ``P(y | z^n, x)``, shape ``(M, X, Y)``."""
    return np.einsum("mk,kxy->mxy", post, model.py_given_xw)


def quantize_y(pyx: np.ndarray, y_map) -> np.ndarray:
    """Push ``P(y | x, w)`` through the map ``y -> y_map[y]`` (cells indexed ``0..B-1``)."""
    y_map = np.asarray(y_map, dtype=np.int64)
    out = np.zeros(pyx.shape[:-1] + (int(y_map.max()) + 1,))
    for y, cell in enumerate(y_map):
        out[..., cell] += pyx[..., y]
    return out


def cond_mi_y_w_given_zn_x(model: DiscreteModel, n: int, law: DatasetLaw | None = None,
                           cap: int | None = None, y_map=None) -> MiResult:
    """``I(Y; W | Z^n, X)`` summed over conditioning cells ``(z^n, x)``.

    With ``y_map`` the test label is replaced by its quantization
    ``y_map[Y]`` while the training set keeps full resolution.
    """
    law = _law(model, n, law, cap)
    post = posterior(model, law).probs
    pyx = model.py_given_xw if y_map is None else quantize_y(model.py_given_xw, y_map)
    pred = np.einsum("mk,kxy->mxy", post, pyx)
    # cell (m, x): sum_w post(w|m) sum_y P(y|x,w) log(P(y|x,w) / pred(y|m,x))
    with np.errstate(divide="ignore", invalid="ignore"):
        logratio = np.log(pyx[None, :, :, :]) - np.log(pred[:, None, :, :])
        contrib = np.where(pyx[None] > 0, pyx[None] * logratio, 0.0)  # (M, K, X, Y)
        weights = law.p_zn[:, None, None, None] * post[:, :, None, None] * model.px[None, None, :, None]
        value = compensated_sum(np.where(weights > 0, weights * contrib, 0.0))
    return MiResult(_clip(value))


def mi_next_sample_given_zn(model: DiscreteModel, n: int, cap: int | None = None) -> MiResult:
    """``I(Z; W | Z^n) = I(W; Z^{n+1}) - I(W; Z^n)`` by the chain rule."""
    return MiResult(mi_w_zn(model, n + 1, cap=cap).value - mi_w_zn(model, n, cap=cap).value)


def cond_mi_w_h_given_zn(prior_w, chan_h_given_w, law: DatasetLaw) -> MiResult:
    """``I(W; h | Z^n)`` when ``h`` and ``Z^n`` are independent given ``W``.

    The joint is ``P_W x P(h | W) x P(Z^n | W)``; per dataset the pair
    ``(W, h)`` has law ``post(w | z^n) P(h | w)``.
    """
    prior_w = np.asarray(prior_w, dtype=float)
    chan = np.asarray(chan_h_given_w, dtype=float)
    joint_wm = prior_w[:, None] * law.p_zn_given_w  # (K, M)
    pm = joint_wm.sum(axis=0)
    keep = pm > 0
    post = (joint_wm[:, keep] / pm[keep]).T  # (M', K)
    ph_m = post @ chan  # (M', H)
    with np.errstate(divide="ignore", invalid="ignore"):
        logratio = np.log(chan[None, :, :]) - np.log(ph_m[:, None, :])
        contrib = np.where(chan[None] > 0, chan[None] * logratio, 0.0)  # (M', K, H)
        weights = pm[keep, None, None] * post[:, :, None]
        value = compensated_sum(np.where(weights > 0, weights * contrib, 0.0))
    return MiResult(_clip(value))


def mi_monte_carlo_w_zn(model: DiscreteModel, n: int, samples: int, seed: int, batch: int = MC_BATCH) -> MiResult:
    """Estimate ``I(W; Z^n)`` as the mean of ``KL(posterior || prior)`` over sampled datasets."""
    if samples < 100:
        raise ValueError("samples must be >= 100")
    if n == 0:
        return MiResult(0.0, method="monte_carlo", mc_stderr=0.0)
    logprior = np.log(model.prior_w)
    vals = np.empty(samples)
    pos = 0
    tables = McTables.build(model)
    for rng, size in batch_streams(seed, samples, batch):
        _, _, post = sample_posteriors(model, n, size, rng, tables)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(post > 0, post * (np.log(post) - logprior[None, :]), 0.0)
        vals[pos:pos + size] = terms.sum(axis=1)
        pos += size
    mean, se = _mean_stderr(vals)
    return MiResult(mean, method="monte_carlo", mc_stderr=se)
