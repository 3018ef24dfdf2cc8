"""Closed-form upper and lower bounds on the minimum excess risk."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import gammaln

from .core import DatasetLaw, DiscreteModel, build_dataset_law
from .info import cond_mi_y_w_given_zn_x, mi_w_zn
from .risk import mer_exact

BOUND_TOL = 1e-9


@dataclass(frozen=True)
class AsymptoticSpec:
    """Continuous-parameter constants entering the asymptotic bounds.

    ``v_p`` is the volume of the unit ball of the chosen norm, ``gamma`` the
    smallest eigenvalue of the norm matrix and ``c`` a cap on the diagonal of
    the Fisher information. ``r`` is the distortion exponent.
    """

    p: int
    diff_entropy_h_w: float
    expected_log_det_fisher: float
    v_p: float
    gamma: float | None = None
    c: float | None = None
    r: float = 2.0

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if not self.v_p > 0:
            raise ValueError("v_p must be > 0")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("gamma must be > 0")
        if self.c is not None and not self.c > 0:
            raise ValueError("c must be > 0")
        if not self.r > 0:
            raise ValueError("r must be > 0")


def euclidean_ball_volume(p: int) -> float:
    return math.exp(0.5 * p * math.log(math.pi) - gammaln(1 + p / 2))


# --- information-theoretic upper bounds --------------------------------------


def ub_conditional(model: DiscreteModel, n: int, law: DatasetLaw | None = None, cap: int | None = None) -> float:
    """``sqrt(b^2/2 * I(Y; W | Z^n, X))``."""
    mi = cond_mi_y_w_given_zn_x(model, n, law=law, cap=cap).value
    return math.sqrt(model.b**2 / 2 * max(mi, 0.0))


def ub_dataset(model: DiscreteModel, n: int, law: DatasetLaw | None = None, cap: int | None = None) -> float:
    """``sqrt(b^2/(2n) * I(W; Z^n))``; infinite at ``n = 0``."""
    if n == 0:
        return math.inf
    mi = mi_w_zn(model, n, law=law, cap=cap).value
    return math.sqrt(model.b**2 / (2 * n) * max(mi, 0.0))


def ub_dataset_from_mi(b: float, n: int, mi: float) -> float:
    return math.inf if n == 0 else math.sqrt(b**2 / (2 * n) * max(mi, 0.0))


def realizable_ub(risk_u: float, mi_y_u_given_v: float, b: float) -> float:
    """``2 R(Y|U) + 3 b I(Y; U | V)``, a bound on ``R(Y|V)`` for ``Y - U - V``."""
    if risk_u < 0 or mi_y_u_given_v < 0 or b < 0:
        raise ValueError("inputs must be nonnegative")
    if math.isinf(mi_y_u_given_v):
        return math.inf
    return 2 * risk_u + 3 * b * mi_y_u_given_v


# --- chaining -----------------------------------------------------------------


class MetricError(ValueError):
    """The loss is not a metric on the label alphabet."""


class QuantizerError(ValueError):
    """A quantizer chain violates its distance or nesting requirement."""


def metric_violations(loss, tol: float = 1e-12) -> list[str]:
    loss = np.asarray(loss, float)
    out = []
    k = loss.shape[0]
    if loss.shape != (k, k):
        return ["loss must be square"]
    if np.any(np.abs(np.diag(loss)) > tol):
        out.append("identity: loss(y, y) != 0")
    off = loss[~np.eye(k, dtype=bool)]
    if np.any(off <= tol):
        out.append("identity of indiscernibles: loss(y, y') = 0 for y != y'")
    if not np.allclose(loss, loss.T, atol=tol):
        out.append("symmetry: loss(y, y') != loss(y', y)")
    tri = loss[:, None, :] - (loss[:, :, None] + loss[None, :, :])  # l(a,c) - l(a,b) - l(b,c)
    if np.any(tri > tol):
        a, b, c = np.argwhere(tri > tol)[0]
        out.append(f"triangle inequality fails for ({a}, {b}, {c})")
    return out


def chain_start_level(diam: float) -> int:
    """Largest integer ``i1`` with ``2^-(i1-1) >= diam``."""
    if diam <= 0:
        raise ValueError("diameter must be positive")
    i1 = math.floor(1 - math.log2(diam))
    # guard against rounding at exact powers of two
    while 2.0 ** (-(i1 - 1)) < diam:
        i1 -= 1
    while 2.0 ** (-i1) >= diam:
        i1 += 1
    return i1


@dataclass(frozen=True)
class QuantizerChain:
    """Maps ``Pi_i`` for levels ``i1..M``; ``maps[j]`` belongs to level ``i1 + j``.

    ``maps[j][y]`` is the label that ``y`` is sent to. The last level must be
    the identity.
    """

    i1: int
    maps: list[np.ndarray]

    @property
    def levels(self) -> list[int]:
        return list(range(self.i1, self.i1 + len(self.maps)))


def check_chain(loss, chain: QuantizerChain, tol: float = 1e-12) -> None:
    loss = np.asarray(loss, float)
    bad = metric_violations(loss, tol)
    if bad:
        raise MetricError("; ".join(bad))
    k = loss.shape[0]
    diam = float(loss.max())
    if chain.i1 != chain_start_level(diam):
        raise QuantizerError(f"chain starts at level {chain.i1}, diameter {diam:g} requires {chain_start_level(diam)}")
    if not chain.maps:
        raise QuantizerError("empty chain")
    ys = np.arange(k)
    for level, pi in zip(chain.levels, chain.maps):
        pi = np.asarray(pi, dtype=np.int64)
        dist = loss[ys, pi]
        if np.any(dist > 2.0**-level + tol):
            y = int(np.argmax(dist - 2.0**-level))
            raise QuantizerError(f"level {level}: loss(y={y}, Pi(y)) = {dist[y]:g} > 2^-{level}")
    for j in range(1, len(chain.maps)):
        fine, coarse = np.asarray(chain.maps[j]), np.asarray(chain.maps[j - 1])
        for cell in np.unique(fine):
            if np.unique(coarse[fine == cell]).size > 1:
                raise QuantizerError(f"level {chain.levels[j - 1]} is not a function of level {chain.levels[j]}")
    if not np.array_equal(np.asarray(chain.maps[-1]), ys):
        raise QuantizerError("chain must end with the identity map")


def dyadic_chain(loss) -> QuantizerChain:
    """Greedy nested quantizer chain from the identity up to level ``i1``.

    Working from fine to coarse, each level merges whole cells of the level
    below around a centre chosen from the label set, so nesting holds by
    construction. Cells are visited in index order for determinism.
    """
    loss = np.asarray(loss, float)
    bad = metric_violations(loss)
    if bad:
        raise MetricError("; ".join(bad))
    k = loss.shape[0]
    i1 = chain_start_level(float(loss.max()))
    min_gap = float(loss[~np.eye(k, dtype=bool)].min()) if k > 1 else 1.0
    top = i1
    while 2.0**-top >= min_gap:
        top += 1
    maps = {top: np.arange(k)}
    for level in range(top - 1, i1 - 1, -1):
        radius = 2.0**-level
        fine = maps[level + 1]
        cells = {int(c): np.flatnonzero(fine == c) for c in np.unique(fine)}
        coarse = np.empty(k, dtype=np.int64)
        pending = sorted(cells)
        while pending:
            seed = pending[0]
            # centre: the label covering the most pending cells, smallest index on ties
            best, best_cover = None, []
            for centre in range(k):
                if loss[cells[seed], centre].max() > radius + 1e-12:
                    continue
                cover = [c for c in pending if loss[cells[c], centre].max() <= radius + 1e-12]
                if len(cover) > len(best_cover):
                    best, best_cover = centre, cover
            if best is None:
                raise QuantizerError(f"no centre within 2^-{level} of cell {seed}")
            for c in best_cover:
                coarse[cells[c]] = best
            pending = [c for c in pending if c not in best_cover]
        maps[level] = coarse
    return QuantizerChain(i1=i1, maps=[maps[i] for i in range(i1, top + 1)])


def _relabel(pi: np.ndarray) -> np.ndarray:
    _, inv = np.unique(pi, return_inverse=True)
    return inv


def chaining_terms(model: DiscreteModel, n: int, chain: QuantizerChain, law: DatasetLaw | None = None,
                   cap: int | None = None) -> list[tuple[int, float]]:
    """``(i, I(W; Pi_i(Y) | Z^n, X))`` for each level of the chain."""
    check_chain(model.loss, chain)
    law = build_dataset_law(model, n, cap=cap, mode="type") if law is None else law
    return [(lvl, cond_mi_y_w_given_zn_x(model, n, law=law, y_map=_relabel(np.asarray(pi))).value)
            for lvl, pi in zip(chain.levels, chain.maps)]


def chaining_ub(model: DiscreteModel, n: int, chain: QuantizerChain | None = None, law: DatasetLaw | None = None,
                cap: int | None = None) -> float:
    """``3 * sum_i 2^-i sqrt(2 I(W; Pi_i(Y) | Z^n, X))`` over the chain levels.

    The loss must be a metric. The sum stops at the identity level because
    every later increment vanishes.
    """
    chain = dyadic_chain(model.loss) if chain is None else chain
    terms = chaining_terms(model, n, chain, law=law, cap=cap)
    return 3 * math.fsum(2.0**-lvl * math.sqrt(2 * max(mi, 0.0)) for lvl, mi in terms)


# --- asymptotic lower bounds ---------------------------------------------------


def shannon_lower_bound(spec: AsymptoticSpec, distortion_d: float) -> float:
    """``h(W) - log(V_p (D r e / p)^(p/r) Gamma(1 + p/r))`` in nats."""
    if not distortion_d > 0:
        raise ValueError("distortion must be > 0")
    p, r = spec.p, spec.r
    return spec.diff_entropy_h_w - (math.log(spec.v_p) + (p / r) * math.log(distortion_d * r * math.e / p)
                                    + gammaln(1 + p / r))


def slb_distortion_floor(spec: AsymptoticSpec, rate: float) -> float:
    """Distortion at which the Shannon lower bound equals ``rate``.

    For ``r = 2`` this is ``p/(2 e C_p) exp((2h - 2R)/p)`` with
    ``C_p = (V_p Gamma(1 + p/2))^(2/p)``.
    """
    p, r = spec.p, spec.r
    log_vg = math.log(spec.v_p) + gammaln(1 + p / r)
    return p / (r * math.e) * math.exp((r / p) * (spec.diff_entropy_h_w - rate - log_vg))


def fisher_asymptotic_mi(spec: AsymptoticSpec, n: int) -> float:
    """``(p/2) log(n / (2 pi e)) + h(W) + E log|J(W)| / 2`` without the vanishing term."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return spec.p / 2 * math.log(n / (2 * math.pi * math.e)) + spec.diff_entropy_h_w + spec.expected_log_det_fisher / 2


def theorem5_lower(spec: AsymptoticSpec, n: int) -> float:
    """``(p/n) pi / (V_p Gamma(1 + p/2))^(2/p) * exp(-E log|J(W)| / p)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    p = spec.p
    c_p = math.exp((2 / p) * (math.log(spec.v_p) + gammaln(1 + p / 2)))
    return p / n * math.pi / c_p * math.exp(-spec.expected_log_det_fisher / p)


def corollary1_lower(spec: AsymptoticSpec, n: int) -> float:
    """``gamma p / (n c)``."""
    if spec.gamma is None or spec.c is None:
        raise ValueError("gamma and c must be set")
    return spec.gamma * spec.p / (n * spec.c)


# --- regularity checklist -------------------------------------------------------


@dataclass(frozen=True)
class ConditionVerdict:
    condition: str
    status: str  # "holds" | "violated" | "declared" | "not_checked"
    detail: str = ""


def appendixB_precondition_report(model: DiscreteModel | None = None, fisher: np.ndarray | None = None,
                                  interior: bool | None = None, prior_in_interior: bool | None = None,
                                  declared: dict | None = None, tol: float = 1e-12) -> list[ConditionVerdict]:
    """Checklist of the regularity conditions behind the Fisher asymptotics.

    Conditions that can be checked numerically are checked: one-to-one
    parameterisation on the grid, positive-definite Fisher information and
    the support facts supplied by an instance. Smoothness and moment
    conditions cannot be checked on a grid; they appear as ``declared``
    when the caller vouches for them and ``not_checked`` otherwise.
    """
    declared = declared or {}
    out = []
    if interior is None:
        out.append(ConditionVerdict("0 nonempty interior", "not_checked"))
    else:
        out.append(ConditionVerdict("0 nonempty interior", "holds" if interior else "violated"))
    for key, name in (("1a", "1a smoothness"), ("1b", "1b moments"), ("2", "2 Fisher equals KL curvature")):
        if key in declared:
            out.append(ConditionVerdict(name, "declared", str(declared[key])))
        else:
            out.append(ConditionVerdict(name, "not_checked"))
    if fisher is not None:
        eig = np.linalg.eigvalsh(np.atleast_2d(np.asarray(fisher, float)))
        out.append(ConditionVerdict("2 Fisher positive definite", "holds" if eig.min() > tol else "violated",
                                    f"smallest eigenvalue {eig.min():.6g}"))
    if model is not None:
        pz = model.pz_given_w()
        diff = np.abs(pz[:, None, :] - pz[None, :, :]).sum(axis=2)
        np.fill_diagonal(diff, np.inf)
        pairs = np.argwhere(diff <= tol)
        pairs = pairs[pairs[:, 0] < pairs[:, 1]]
        if pairs.size:
            detail = ", ".join(f"w{a}=w{b}" for a, b in pairs[:5])
            out.append(ConditionVerdict("3 one-to-one", "violated", f"identical sample laws: {detail}"))
        else:
            out.append(ConditionVerdict("3 one-to-one", "holds", f"min L1 distance {diff.min():.3g}"))
    else:
        out.append(ConditionVerdict("3 one-to-one", "not_checked"))
    if prior_in_interior is None:
        out.append(ConditionVerdict("4 prior inside the interior", "not_checked"))
    else:
        out.append(ConditionVerdict("4 prior inside the interior", "holds" if prior_in_interior else "violated",
                                    "" if prior_in_interior else "prior support reaches the boundary"))
    return out


# --- report ------------------------------------------------------------------------


@dataclass(frozen=True)
class Verdict:
    name: str
    holds: bool
    slack: float
    hard: bool = True
    lhs: float | None = None
    rhs: float | None = None


def verdict(name: str, lhs: float, rhs: float, tol: float = BOUND_TOL, hard: bool = True) -> Verdict:
    """``lhs <= rhs + tol``; slack is the margin when it holds and the excess otherwise."""
    margin = rhs - lhs
    holds = bool(margin >= -tol)
    return Verdict(name=name, holds=holds, slack=margin if holds else abs(margin), hard=hard, lhs=lhs, rhs=rhs)


@dataclass
class BoundsReport:
    n: int
    mer_exact: float | None
    ub_conditional: float
    ub_dataset: float
    lb_theorem5: float | None = None
    lb_corollary1: float | None = None
    realizable_ub: float | None = None
    chaining_ub: float | None = None
    mi_w_zn: float | None = None
    mi_y_w_given_zn_x: float | None = None
    verdicts: list[Verdict] = field(default_factory=list)

    @property
    def hard_pass(self) -> bool:
        return all(v.holds for v in self.verdicts if v.hard)

    def to_json(self) -> dict:
        out = asdict(self)
        out["hard_pass"] = self.hard_pass
        return out


def bounds_report(model: DiscreteModel, n: int, spec: AsymptoticSpec | None = None, chain: QuantizerChain | None = None,
                  use_chaining: bool | None = None, safety: float = 1.1, cap: int | None = None,
                  tol: float = BOUND_TOL) -> BoundsReport:
    """Evaluate every applicable bound at ``(model, n)`` against the exact MER.

    Exact inequalities are hard verdicts. Asymptotic lower bounds are soft and
    are compared after dividing by ``safety``.
    """
    law = build_dataset_law(model, n, cap=cap, mode="type")
    mer = mer_exact(model, n, law=law)
    mi_cond = cond_mi_y_w_given_zn_x(model, n, law=law).value
    mi_data = mi_w_zn(model, n, law=law).value
    u4 = math.sqrt(model.b**2 / 2 * max(mi_cond, 0.0))
    u5 = ub_dataset_from_mi(model.b, n, mi_data)
    rep = BoundsReport(n=n, mer_exact=mer.mer, ub_conditional=u4, ub_dataset=u5, mi_w_zn=mi_data,
                       mi_y_w_given_zn_x=mi_cond)
    rep.verdicts.append(verdict("conditional_mi_upper", mer.mer, u4, tol))
    rep.verdicts.append(verdict("dataset_mi_upper", mer.mer, u5, tol))
    rep.verdicts.append(verdict("conditional_le_dataset", u4, u5, tol))
    rub = realizable_ub(max(mer.r_y_given_w_x, 0.0), max(mi_cond, 0.0), model.b)
    rep.realizable_ub = rub
    rep.verdicts.append(verdict("realizable_upper", mer.r_y_given_zn_x, rub, tol))
    if use_chaining is None:
        use_chaining = not metric_violations(model.loss)
    if use_chaining:
        rep.chaining_ub = chaining_ub(model, n, chain, law=law)
        rep.verdicts.append(verdict("chaining_upper", mer.mer, rep.chaining_ub, tol))
    if spec is not None and n >= 1:
        rep.lb_theorem5 = theorem5_lower(spec, n)
        rep.verdicts.append(verdict("theorem5_lower", rep.lb_theorem5 / safety, mer.mer, tol, hard=False))
        if spec.gamma is not None and spec.c is not None:
            rep.lb_corollary1 = corollary1_lower(spec, n)
            rep.verdicts.append(verdict("corollary1_lower", rep.lb_corollary1 / safety, mer.mer, tol, hard=False))
    return rep
