"""Bayes risks, posteriors, the excess-risk distortion and the minimum excess risk."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DatasetLaw, DiscreteModel, build_dataset_law

TIE_RTOL = 1e-12
MC_BATCH = 2000


def argmin_first(values: np.ndarray, axis: int = -1, rtol: float = TIE_RTOL) -> np.ndarray:
    """Index of the minimum along ``axis``; near-ties go to the smallest index.

    Values within ``rtol * max(1, |min|)`` of the minimum count as tied so
    that rounding noise cannot flip a decision.
    """
    values = np.asarray(values, dtype=float)
    vmin = values.min(axis=axis, keepdims=True)
    slack = rtol * np.maximum(1.0, np.abs(vmin))
    return np.argmax(values <= vmin + slack, axis=axis)


def bayes_risk(joint, loss) -> tuple[float, np.ndarray]:
    """Bayes risk of predicting ``Y`` from ``S`` under ``joint[s, y]``.

    Returns the risk and the optimal rule (one ``Y`` index per ``s``).
    """
    joint = np.asarray(joint, dtype=float)
    expected = joint @ np.asarray(loss, dtype=float)
    rule = argmin_first(expected, axis=1)
    risk = float(np.take_along_axis(expected, rule[:, None], axis=1).sum())
    return risk, rule


def conditional_losses(model: DiscreteModel) -> np.ndarray:
    """``C[w, x, a] = E[loss(Y, a) | x, w]``."""
    return model.py_given_xw @ model.loss


def bayes_decisions(model: DiscreteModel) -> np.ndarray:
    """Bayes decision table ``h*_w`` for every parameter value, shape ``(K, |X|)``."""
    return argmin_first(conditional_losses(model), axis=2)


def risk_given_w_x(model: DiscreteModel) -> float:
    """``R(Y | W, X)``."""
    cmin = conditional_losses(model).min(axis=2)
    return float(model.prior_w @ cmin @ model.px)


def distortion_matrix(model: DiscreteModel, tables: np.ndarray) -> np.ndarray:
    """Excess risk ``d(w, h)`` of each decision table over ``h*_w``; shape ``(K, T)``."""
    tables = np.atleast_2d(np.asarray(tables, dtype=np.int64))
    closs = conditional_losses(model)
    cmin = closs.min(axis=2)
    xs = np.arange(model.n_x)
    picked = closs[:, xs[None, :], tables]  # (K, T, X)
    d = ((picked - cmin[:, None, :]) * model.px[None, None, :]).sum(axis=2)
    return np.maximum(d, 0.0)


def distortion(model: DiscreteModel, w: int, h) -> float:
    return float(distortion_matrix(model, np.asarray(h)[None, :])[w, 0])


@dataclass(frozen=True)
class PosteriorTable:
    n: int
    probs: np.ndarray  # (M, K)
    reachable: np.ndarray  # (M,) bool


def posterior(model: DiscreteModel, law: DatasetLaw) -> PosteriorTable:
    joint = law.p_zn_given_w.T * model.prior_w[None, :]
    pz = joint.sum(axis=1)
    reachable = pz > 0
    probs = np.full_like(joint, 1.0 / model.n_w)
    probs[reachable] = joint[reachable] / pz[reachable, None]
    return PosteriorTable(n=law.n, probs=probs, reachable=reachable)


@dataclass(frozen=True)
class MerResult:
    n: int
    r_y_given_zn_x: float
    r_y_given_w_x: float
    mer: float
    method: str = "exact"
    mc_stderr: float | None = None
    samples: int | None = None
    rules: np.ndarray | None = field(default=None, repr=False)
    expected_distortion: float | None = None


def predictive_rules(model: DiscreteModel, post: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior-predictive Bayes rule per dataset.

    Returns ``(rules, risk_cells)`` with ``rules[m, x]`` the optimal action and
    ``risk_cells[m, x]`` its expected loss under the predictive law.
    """
    pyx = model.py_given_xw
    pred = (post @ pyx.reshape(pyx.shape[0], -1)).reshape(post.shape[0], *pyx.shape[1:])
    expected = pred @ model.loss
    rules = argmin_first(expected, axis=2)
    risk_cells = np.take_along_axis(expected, rules[:, :, None], axis=2)[:, :, 0]
    return rules, risk_cells


def excess_of_rules(model: DiscreteModel, rules: np.ndarray, w_index=None, tables=None) -> np.ndarray:
    """``d(w, rules[m])`` for all ``w`` (shape ``(K, M)``) or for paired ``w_index[m]``."""
    if tables is None:
        closs = conditional_losses(model)
        cmin = closs.min(axis=2)
    else:
        closs, cmin = tables.closs, tables.cmin
    xs = np.arange(model.n_x)
    if w_index is None:
        picked = closs[:, xs[None, :], rules]  # (K, M, X)
        return np.maximum(((picked - cmin[:, None, :]) * model.px).sum(axis=2), 0.0)
    picked = closs[w_index[:, None], xs[None, :], rules]  # (M, X)
    return np.maximum(((picked - cmin[w_index]) * model.px).sum(axis=1), 0.0)


def mer_exact(model: DiscreteModel, n: int, law: DatasetLaw | None = None, cap: int | None = None) -> MerResult:
    """Exact minimum excess risk by enumerating datasets.

    The dataset law defaults to type (multiset) cells, which gives the same
    value as sequence enumeration with far fewer cells.
    """
    if law is None:
        law = build_dataset_law(model, n, cap=cap, mode="type")
    post = posterior(model, law)
    rules, risk_cells = predictive_rules(model, post.probs)
    r_zn = float(law.p_zn @ risk_cells @ model.px)
    r_w = risk_given_w_x(model)
    dmat = excess_of_rules(model, rules)
    joint = model.prior_w[:, None] * law.p_zn_given_w
    expected_d = float((joint * dmat).sum())
    mer = r_zn - r_w
    scale = max(1.0, model.b)
    if abs(expected_d - mer) > 1e-10 * scale:
        raise ArithmeticError(f"excess-risk identity broken: E[d]={expected_d!r} vs MER={mer!r}")
    return MerResult(
        n=n,
        r_y_given_zn_x=r_zn,
        r_y_given_w_x=r_w,
        mer=mer,
        rules=rules,
        expected_distortion=expected_d,
    )


def _log_pz(model: DiscreteModel) -> tuple[np.ndarray, np.ndarray]:
    pz = model.pz_given_w()
    with np.errstate(divide="ignore"):
        logpz = np.log(pz)
    impossible = pz <= 0
    return np.where(impossible, 0.0, logpz), impossible.astype(float)


@dataclass(frozen=True)
class McTables:
    """Per-model arrays reused by every Monte Carlo batch."""

    pz: np.ndarray  # (K, Z), rows renormalised
    logpz_t: np.ndarray  # (Z, K), log P(z | w) with impossible cells zeroed
    impossible_t: np.ndarray  # (Z, K), 1 where P(z | w) = 0
    any_impossible: bool
    closs: np.ndarray  # (K, X, A)
    cmin: np.ndarray  # (K, X)

    @classmethod
    def build(cls, model: DiscreteModel) -> "McTables":
        pz = model.pz_given_w()
        logpz, impossible = _log_pz(model)
        closs = conditional_losses(model)
        return cls(pz=pz / pz.sum(axis=1, keepdims=True), logpz_t=np.ascontiguousarray(logpz.T),
                   impossible_t=np.ascontiguousarray(impossible.T), any_impossible=bool(impossible.any()),
                   closs=closs, cmin=closs.min(axis=2))


def sample_posteriors(model: DiscreteModel, n: int, size: int, rng: np.random.Generator,
                      tables: McTables | None = None):
    """Draw ``(w, counts)`` pairs and the exact posterior for each draw.

    Only the sample counts of each dataset are drawn because the posterior
    depends on nothing else. Counts are sparse when ``n`` is small next to
    the alphabet, so the log-likelihood is a sparse product.
    """
    from scipy import sparse

    t = McTables.build(model) if tables is None else tables
    w = rng.choice(model.n_w, size=size, p=model.prior_w)
    if n > 0:
        counts = rng.multinomial(n, t.pz[w])
    else:
        counts = np.zeros((size, model.n_z), dtype=np.int64)
    sc = sparse.csr_matrix(counts.astype(float))
    loglik = np.asarray(sc @ t.logpz_t)
    if t.any_impossible:
        loglik[np.asarray(sc @ t.impossible_t) > 0] = -np.inf
    with np.errstate(divide="ignore"):
        logpost = np.log(model.prior_w)[None, :] + loglik
    logpost -= logpost.max(axis=1, keepdims=True)
    post = np.exp(logpost)
    post /= post.sum(axis=1, keepdims=True)
    return w, counts, post


def batch_streams(seed: int, total: int, batch: int) -> list[tuple[np.random.Generator, int]]:
    """Split ``total`` draws into batches, each with its own child seed stream.

    Batch ``i`` always uses child ``i`` of ``SeedSequence(seed)``, so results
    do not depend on how batches are scheduled.
    """
    sizes = [batch] * (total // batch)
    if total % batch:
        sizes.append(total % batch)
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    return [(np.random.default_rng(c), s) for c, s in zip(children, sizes)]


def _mean_stderr(values: np.ndarray) -> tuple[float, float]:
    mean = float(values.mean())
    if values.size < 2:
        return mean, 0.0
    return mean, float(values.std(ddof=1) / np.sqrt(values.size))


def mer_monte_carlo(model: DiscreteModel, n: int, samples: int, seed: int, batch: int = MC_BATCH) -> MerResult:
    """Monte Carlo estimate of the minimum excess risk.

    Each draw contributes ``d(w, psi*(z^n))``, the exact conditional excess
    risk of the posterior-predictive rule, so no enumeration is needed.
    """
    if samples < 100:
        raise ValueError("samples must be >= 100")
    excess = np.empty(samples)
    pos = 0
    tables = McTables.build(model)
    for rng, size in batch_streams(seed, samples, batch):
        w, _, post = sample_posteriors(model, n, size, rng, tables)
        rules, _ = predictive_rules(model, post)
        excess[pos:pos + size] = excess_of_rules(model, rules, w_index=w, tables=tables)
        pos += size
    mean, se = _mean_stderr(excess)
    r_w = risk_given_w_x(model)
    return MerResult(n=n, r_y_given_zn_x=r_w + mean, r_y_given_w_x=r_w, mer=mean,
                     method="monte_carlo", mc_stderr=se, samples=samples)


def is_quadratic_loss(model: DiscreteModel, rtol: float = 1e-9) -> bool:
    if model.y_values is None:
        return False
    y = model.y_values
    sq = (y[:, None] - y[None, :]) ** 2
    return bool(np.allclose(model.loss, sq, rtol=rtol, atol=rtol * max(1.0, sq.max())))


def hypothesis_distance_matrix(model: DiscreteModel) -> np.ndarray:
    """``d(w, h*_{w'})`` for all parameter pairs."""
    return excess_of_rules(model, bayes_decisions(model))


def delta_n(model: DiscreteModel, n: int, law: DatasetLaw | None = None, cap: int | None = None,
            require_quadratic: bool = True) -> float:
    """Expected distortion between Bayes decisions of two independent posterior draws.

    Exact by enumeration. The quantity is meaningful when the distortion is a
    distance between decision functions, which holds for quadratic loss.
    """
    if require_quadratic and not is_quadratic_loss(model):
        raise ValueError("delta_n needs a distortion that is a distance in decision space (quadratic loss)")
    if law is None:
        law = build_dataset_law(model, n, cap=cap, mode="type")
    post = posterior(model, law).probs
    dd = hypothesis_distance_matrix(model)
    per_cell = np.einsum("mk,kl,ml->m", post, dd, post)
    return float(law.p_zn @ per_cell)


def delta_n_monte_carlo(model: DiscreteModel, n: int, samples: int, seed: int,
                        require_quadratic: bool = True, batch: int = MC_BATCH) -> tuple[float, float]:
    """Monte Carlo version of :func:`delta_n` for sample sizes beyond enumeration."""
    if require_quadratic and not is_quadratic_loss(model):
        raise ValueError("delta_n needs a distortion that is a distance in decision space (quadratic loss)")
    dd = hypothesis_distance_matrix(model)
    vals = np.empty(samples)
    pos = 0
    tables = McTables.build(model)
    for rng, size in batch_streams(seed, samples, batch):
        _, _, post = sample_posteriors(model, n, size, rng, tables)
        vals[pos:pos + size] = np.einsum("mk,kl,ml->m", post, dd, post)
        pos += size
    return _mean_stderr(vals)
