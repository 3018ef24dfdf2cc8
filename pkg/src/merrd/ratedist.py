"""The three rate-distortion curves of the learning problem.

``D^L`` encodes ``W`` directly into a decision table, ``D_n`` must go through
the training set (``W -> Z^n -> h``) with the rate measured as ``I(W; h)``,
and ``D^U_n`` additionally charges the rate as ``I(Z^n; h)``.

Lambda multiplies the rate: every solver minimises ``E[d] + lam * I``, so
``lam -> 0`` recovers the nearest-reproduction code and ``lam -> inf`` the
best constant table.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import DatasetLaw, DiscreteModel, build_dataset_law, enumerate_hypotheses
from .info import cond_mi_w_h_given_zn, mi_channel_pair
from .risk import argmin_first, delta_n, distortion_matrix, mer_exact, posterior

BA_TOL = 1e-9
BA_MAX_ITER = 100_000
DN_TOL = 1e-10
DN_MAX_ITER = 50_000
RATE_TOL = 1e-4
CHORD_TOL = 1e-9
LAMBDA_GRID = np.geomspace(1e-4, 1e3, 40)
TINY = 1e-300
WARM_MIX = 1e-3
POLISH_ITER = 2000
FLOOR_LOG = math.log(1e-12)


@dataclass(frozen=True)
class RDPoint:
    lam: float
    rate: float
    distortion: float
    iterations: int = 0
    converged: bool = True
    gap: float = 0.0
    target_rate: float | None = None


@dataclass(frozen=True)
class RDCurve:
    kind: str  # "lower" | "exact_n" | "upper_n"
    points: list[RDPoint]
    n: int | None = None
    channels: list[np.ndarray] | None = field(default=None, repr=False)


def _lse(x: np.ndarray, axis=None) -> np.ndarray:
    # scipy's logsumexp carries heavy per-call overhead on the tiny arrays used here
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis) if axis is not None else out.reshape(())


def _clean_rate(value: float) -> float:
    return 0.0 if -1e-13 < value < 0 else value


def _rows_to_channel(rows: np.ndarray, n_cols: int) -> np.ndarray:
    out = np.zeros((rows.shape[0], n_cols))
    out[np.arange(rows.shape[0]), rows] = 1.0
    return out


# --- direct problems: Blahut-Arimoto ---------------------------------------


def _direct_point(source, dist, chan, lam, iters=0, converged=True, gap=0.0) -> RDPoint:
    rate = _clean_rate(mi_channel_pair(source, chan).value)
    d = float(np.sum(source[:, None] * chan * dist))
    return RDPoint(lam=lam, rate=rate, distortion=d, iterations=iters, converged=converged, gap=gap)


def ba_endpoint_zero(source, dist) -> tuple[RDPoint, np.ndarray]:
    """``lam -> 0``: every source symbol takes its nearest reproduction."""
    source, dist = np.asarray(source, float), np.asarray(dist, float)
    chan = _rows_to_channel(argmin_first(dist, axis=1), dist.shape[1])
    return _direct_point(source, dist, chan, 0.0), chan


def ba_endpoint_inf(source, dist) -> tuple[RDPoint, np.ndarray]:
    """``lam -> inf``: the single reproduction with least expected distortion."""
    source, dist = np.asarray(source, float), np.asarray(dist, float)
    best = int(argmin_first(source @ dist))
    chan = np.zeros_like(dist)
    chan[:, best] = 1.0
    return _direct_point(source, dist, chan, math.inf), chan


def ba_direct(source, dist, lam: float, tol: float = BA_TOL, max_iter: int = BA_MAX_ITER,
              q0: np.ndarray | None = None, accelerate: bool = True) -> tuple[RDPoint, np.ndarray]:
    """Blahut-Arimoto at slope ``lam`` for a finite source and distortion matrix.

    Runs in the log domain. The stopping rule uses Blahut's certificate:
    ``max_h log c_h`` bounds the excess of ``I + E[d]/lam`` over its minimum,
    so ``lam * max_h log c_h`` bounds the excess of ``E[d] + lam * I`` in
    distortion units. Iteration stops once that is at most ``tol``; it is
    returned as ``gap``. ``q0`` warm-starts the output marginal.

    With ``accelerate`` the output marginal is extrapolated by SQUAREM and
    the extrapolation is kept only if it lowers the dual objective, so the
    iteration stays monotone. ``iterations`` counts Blahut-Arimoto maps.
    """
    source, dist = np.asarray(source, float), np.asarray(dist, float)
    if lam <= 0:
        return ba_endpoint_zero(source, dist)
    if math.isinf(lam):
        return ba_endpoint_inf(source, dist)
    if np.count_nonzero(source > 0) == 1:
        # one live symbol carries no information, so its best reproduction is free at every slope
        pt, chan = ba_endpoint_zero(source, dist)
        return RDPoint(lam=lam, rate=pt.rate, distortion=pt.distortion), chan
    n_out = dist.shape[1]
    live = source > 0
    p_live = source[live]
    logp = np.log(p_live)
    a = -dist[live] / lam
    if q0 is None:
        logq = np.full(n_out, -math.log(n_out))
    else:
        logq = np.log((1 - WARM_MIX) * np.asarray(q0, float) + WARM_MIX / n_out)

    def ba_map(lq):
        logz = _lse(lq[None, :] + a, axis=1)
        logc = _lse(logp[:, None] + a - logz[:, None], axis=0)
        nxt = lq + logc
        return nxt - _lse(nxt), lam * float(logc.max())

    def dual(lq):
        # minimised by the optimal marginal; BA maps never increase it
        return -float(p_live @ _lse(lq[None, :] + a, axis=1))

    converged = False
    cert = math.inf
    it = 0
    while it < max_iter:
        q1, cert = ba_map(logq)
        it += 1
        if cert <= tol:
            converged = True
            break
        if not accelerate:
            logq = q1
            continue
        q2, cert2 = ba_map(q1)
        it += 1
        if cert2 <= tol:
            logq, cert, converged = q1, cert2, True
            break
        x0, x1, x2 = np.exp(logq), np.exp(q1), np.exp(q2)
        r, v = x1 - x0, x2 - 2 * x1 + x0
        nv = float(np.linalg.norm(v))
        logq = q2
        if nv == 0.0:
            continue
        alpha = min(-float(np.linalg.norm(r)) / nv, -1.0)
        f2 = dual(q2)
        while alpha < -1.0:
            # never let a letter collapse to zero: multiplicative updates could not revive it
            with np.errstate(divide="ignore", invalid="ignore"):
                lx = np.log(x0 - 2 * alpha * r + alpha * alpha * v)
            lx = np.fmax(lx, q2 + FLOOR_LOG)
            trial, _ = ba_map(lx - _lse(lx))
            it += 1
            if dual(trial) <= f2:
                logq = trial
                break
            alpha = max((alpha - 1.0) / 2.0, -1.0)
    logits = logq[None, :] + a
    chan = np.zeros_like(dist)
    chan[live] = np.exp(logits - _lse(logits, axis=1)[:, None])
    # zero-probability source rows carry no weight; give them their nearest reproduction
    dead = np.flatnonzero(~live)
    if dead.size:
        chan[dead, argmin_first(dist[dead], axis=1)] = 1.0
    chan /= chan.sum(axis=1, keepdims=True)
    return _direct_point(source, dist, chan, lam, it, converged, max(cert, 0.0)), chan


# --- the dataset-constrained problem ---------------------------------------


@dataclass
class _DnData:
    pw: np.ndarray  # (K,)
    a: np.ndarray  # P(m | w) restricted to reachable m, (K, M')
    post: np.ndarray  # (M', K)
    ct: np.ndarray  # expected distortion given m, (M', H)
    pm: np.ndarray  # (M',)
    keep: np.ndarray  # reachable mask over all M
    d: np.ndarray  # (K, H)


def _dn_data(prior_w, p_m_given_w, d) -> _DnData:
    pw = np.asarray(prior_w, float)
    full = np.asarray(p_m_given_w, float)
    pm_all = pw @ full
    keep = pm_all > 0
    a = full[:, keep]
    pm = pm_all[keep]
    post = (pw[:, None] * a).T / pm[:, None]
    ct = post @ d
    return _DnData(pw=pw, a=a, post=post, ct=ct, pm=pm, keep=keep, d=np.asarray(d, float))


def _dn_rate(data: _DnData, q_rows: np.ndarray) -> float:
    return _clean_rate(mi_channel_pair(data.pw, data.a @ q_rows).value)


def _dn_lagrangian(data: _DnData, q_rows: np.ndarray, lam: float) -> float:
    return float(data.pm @ np.sum(data.ct * q_rows, axis=1)) + lam * _dn_rate(data, q_rows)


def _dn_fw_gap(data: _DnData, q_rows: np.ndarray, lam: float) -> float:
    """Frank-Wolfe duality gap of the Lagrangian, an upper bound on its suboptimality."""
    phw = np.maximum(data.a @ q_rows, TINY)
    q = np.maximum(data.pw @ phw, TINY)
    grad = data.pm[:, None] * data.ct + lam * ((data.pw[:, None] * data.a).T @ (np.log(phw) - np.log(q)))
    return float(np.sum(grad * q_rows) - grad.min(axis=1).sum())


def _expand(data: _DnData, q_rows: np.ndarray, n_m: int) -> np.ndarray:
    out = np.zeros((n_m, q_rows.shape[1]))
    out[data.keep] = q_rows
    # unreachable datasets: conventional nearest table under the prior
    spare = np.flatnonzero(~data.keep)
    if spare.size:
        out[spare, int(argmin_first(data.pw @ data.d))] = 1.0
    return out


def _dn_point(data: _DnData, q_rows: np.ndarray, lam, iters=0, converged=True, gap=0.0) -> RDPoint:
    phw = data.a @ q_rows
    d = float(np.sum(data.pw[:, None] * phw * data.d))
    return RDPoint(lam=lam, rate=_dn_rate(data, q_rows), distortion=d, iterations=iters,
                   converged=converged, gap=gap)


def dn_lagrangian_solve(data: _DnData, lam: float, q0: np.ndarray | None = None, tol: float = DN_TOL,
                        max_iter: int = DN_MAX_ITER, check_every: int = 25) -> tuple[RDPoint, np.ndarray]:
    """Minimise ``E[d(W, h)] + lam * I(W; h)`` over channels ``P(h | z^n)``.

    Uses the majorise-minimise update obtained by bounding ``I(W; h)`` with
    its variational form, which is monotone and keeps iterates strictly
    inside the simplex product. Convergence is judged from the objective
    decrease extrapolated over the elapsed iterations; the Frank-Wolfe gap
    at exit is reported as a certificate.
    """
    n_m, n_h = data.ct.shape
    if lam <= 0:
        q_rows = _rows_to_channel(argmin_first(data.ct, axis=1), n_h)
        return _dn_point(data, q_rows, 0.0), q_rows
    if math.isinf(lam):
        q_rows = np.zeros((n_m, n_h))
        q_rows[:, int(argmin_first(data.pw @ data.d))] = 1.0
        return _dn_point(data, q_rows, math.inf), q_rows
    q_rows = np.full((n_m, n_h), 1.0 / n_h) if q0 is None else (1 - WARM_MIX) * q0 + WARM_MIX / n_h
    scaled = -data.ct / lam
    prev = _dn_lagrangian(data, q_rows, lam)
    converged = False
    gap = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        phw = np.maximum(data.a @ q_rows, TINY)
        q = np.maximum(data.pw @ phw, TINY)
        z = np.log(np.maximum(q_rows, TINY)) + scaled - data.post @ (np.log(phw) - np.log(q))
        z -= z.max(axis=1, keepdims=True)
        q_rows = np.exp(z)
        q_rows /= q_rows.sum(axis=1, keepdims=True)
        if it % check_every == 0:
            cur = _dn_lagrangian(data, q_rows, lam)
            est = max(prev - cur, 0.0) * it / check_every
            prev = cur
            if est <= tol * max(1.0, abs(cur)):
                gap = _dn_fw_gap(data, q_rows, lam)
                converged = True
                break
    if not converged:
        gap = _dn_fw_gap(data, q_rows, lam)
    return _dn_point(data, q_rows, lam, it, converged, max(gap, 0.0)), q_rows


# --- hitting a target rate ---------------------------------------------------


def _mix(pa, ca, pb, cb, target, point_fn):
    """Mix two channels whose rates bracket ``target``.

    The mixture is feasible by convexity of the rate, and its distortion is
    the linear interpolation of the two endpoints.
    """
    span = pa.rate - pb.rate
    theta = 1.0 if span <= 0 else min(max((target - pb.rate) / span, 0.0), 1.0)
    chan = theta * ca + (1 - theta) * cb
    pt = point_fn(chan)
    lam = pa.lam if theta >= 0.5 else pb.lam
    return RDPoint(lam=lam, rate=pt.rate, distortion=pt.distortion, iterations=pa.iterations + pb.iterations,
                   converged=pa.converged and pb.converged, gap=max(pa.gap, pb.gap), target_rate=target), chan


def _hit_rate(target, solve, point_fn, lam_min, lam_max, lam_start, rate_tol=RATE_TOL, chord_tol=CHORD_TOL,
              max_steps=200, expand=8.0):
    """Find the point of a Lagrangian-traced curve at rate ``target``.

    ``solve(lam, warm)`` returns ``(point, channel, warm_state)``. The achieved
    rate decreases in ``lam``. A bracket is grown geometrically from
    ``lam_start`` and then shrunk by Illinois false position on ``log lam``.
    The result always has rate at most ``target`` (up to rounding): unless a
    Lagrangian point lands on the target, the two bracketing channels are
    mixed, which also covers jumps in the Lagrangian trace (the mixture is
    optimal on the linear piece between them).
    """
    p0, c0, _ = solve(0.0, None)
    if target >= p0.rate:
        return _retarget(p0, target), c0
    pinf, cinf, _ = solve(math.inf, None)
    if target <= pinf.rate:
        return _retarget(pinf, target), cinf
    cur = solve(lam_start, None)
    lo = hi = None
    if cur[0].rate >= target:
        lo = cur
        while hi is None:
            lam = lo[0].lam * expand
            if lam > lam_max:
                return _mix(lo[0], lo[1], pinf, cinf, target, point_fn)
            nxt = solve(lam, lo[2])
            if nxt[0].rate >= target:
                lo = nxt
            else:
                hi = nxt
    else:
        hi = cur
        while lo is None:
            lam = hi[0].lam / expand
            if lam < lam_min:
                return _mix(p0, c0, hi[0], hi[1], target, point_fn)
            nxt = solve(lam, hi[2])
            if nxt[0].rate < target:
                hi = nxt
            else:
                lo = nxt
    xa, xb = math.log(lo[0].lam), math.log(hi[0].lam)
    fa, fb = lo[0].rate - target, hi[0].rate - target
    side = 0
    for _ in range(max_steps):
        if _bracket_error(lo[0], hi[0], target) <= chord_tol or xb - xa < 1e-13:
            break
        x = (xa * fb - xb * fa) / (fb - fa) if fa > fb else 0.5 * (xa + xb)
        if not (xa + 0.01 * (xb - xa) < x < xb - 0.01 * (xb - xa)):
            x = 0.5 * (xa + xb)
        warm = lo[2] if x - xa < xb - x else hi[2]
        cur = solve(math.exp(x), warm)
        f = cur[0].rate - target
        if abs(f) <= 1e-12:
            return _retarget(cur[0], target), cur[1]
        if f > 0:
            lo, xa, fa = cur, x, f
            if side == 1:
                fb *= 0.5
            side = 1
        else:
            hi, xb, fb = cur, x, f
            if side == -1:
                fa *= 0.5
            side = -1
    return _mix(lo[0], lo[1], hi[0], hi[1], target, point_fn)


def _bracket_error(pa: RDPoint, pb: RDPoint, target: float) -> float:
    """Distance from the chord at ``target`` down to the supporting lines of the two points.

    Each Lagrangian point carries a supporting line of slope ``-lam``, and the
    convex curve lies above both, so this bounds the interpolation error.
    """
    span = pa.rate - pb.rate
    if span <= 0:
        return 0.0
    theta = (target - pb.rate) / span
    chord = pb.distortion + theta * (pa.distortion - pb.distortion)
    support = max(pa.distortion + pa.lam * (pa.rate - target), pb.distortion - pb.lam * (target - pb.rate))
    return max(chord - support, 0.0)


def _retarget(pt: RDPoint, target: float) -> RDPoint:
    return RDPoint(lam=pt.lam, rate=pt.rate, distortion=pt.distortion, iterations=pt.iterations,
                   converged=pt.converged, gap=pt.gap, target_rate=target)


class _ConicDn:
    """Rate-constrained ``D_n`` as an exponential-cone program.

    The rate enters as a parameter so the problem is compiled once and
    re-solved for each target. The dual variable of the rate constraint is
    the Lagrangian slope; the Frank-Wolfe gap of the Lagrangian at that slope
    is returned as the certificate.
    """

    CERT_TOL = 1e-6
    SOLVER_OPTS = {"tol_gap_abs": 1e-10, "tol_gap_rel": 1e-10, "tol_feas": 1e-10, "max_iter": 500}

    def __init__(self, data: _DnData, direct: bool = False):
        import cvxpy as cp

        self.cp = cp
        self.data = data
        m, h = data.ct.shape
        self.rate = cp.Parameter(nonneg=True)
        self.lam = cp.Parameter(nonneg=True)
        self.q = cp.Variable((m, h), nonneg=True)
        # a direct problem observes the source itself, so P(h | source) is the variable
        phw = self.q if direct else data.a @ self.q
        pw = data.pm if direct else data.pw
        # the output marginal gets its own variable so each cone touches one entry of it
        marg = cp.Variable((1, h), nonneg=True)
        mi = cp.sum(cp.multiply(pw[:, None], cp.rel_entr(phw, np.ones((len(pw), 1)) @ marg)))
        cost = cp.sum(cp.multiply(data.pm[:, None] * data.ct, self.q))
        rows = [cp.sum(self.q, axis=1) == 1, marg == cp.reshape(pw @ phw, (1, h), order="C")]
        self.con = mi <= self.rate
        self.prob = cp.Problem(cp.Minimize(cost), [*rows, self.con])
        self.pen = cp.Problem(cp.Minimize(cost + self.lam * mi), rows)

    def _run(self, prob):
        cp = self.cp
        # an inaccurate solve is surfaced through the converged flag and the gap
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            try:
                prob.solve(solver=cp.CLARABEL, **self.SOLVER_OPTS)
            except cp.error.SolverError:
                prob.solve(solver=cp.CLARABEL)
        rows = np.clip(np.asarray(self.q.value, float), 0.0, None)
        return rows / rows.sum(axis=1, keepdims=True), prob.status

    def _ok(self, status, gap, distortion) -> bool:
        # the gap bounds suboptimality on its own, so it can vouch for an inaccurate status
        if status == self.cp.OPTIMAL:
            return True
        return status == self.cp.OPTIMAL_INACCURATE and gap <= self.CERT_TOL * max(1.0, abs(distortion))

    def solve(self, target: float):
        """Least distortion subject to ``I(W; h) <= target``."""
        self.rate.value = float(target)
        rows, status = self._run(self.prob)
        lam = float(max(self.con.dual_value, 0.0))
        gap = max(_dn_fw_gap(self.data, rows, lam), 0.0)
        pt = _dn_point(self.data, rows, lam, 0, True, gap)
        pt = dataclasses.replace(pt, converged=self._ok(status, gap, pt.distortion))
        return _retarget(pt, target), rows

    def solve_lagrangian(self, lam: float):
        """Minimiser of ``E[d(W, h)] + lam * I(W; h)``."""
        self.lam.value = float(lam)
        rows, status = self._run(self.pen)
        gap = max(_dn_fw_gap(self.data, rows, lam), 0.0)
        pt = _dn_point(self.data, rows, lam, 0, True, gap)
        return dataclasses.replace(pt, converged=self._ok(status, gap, pt.distortion)), rows


class RDProblem:
    """All three rate-distortion problems for one ``(model, n)``.

    Building it enumerates hypotheses and the dataset law once so that many
    rates can be solved cheaply. The dataset law uses type cells, which is
    exact: every objective and constraint is invariant to reordering the
    samples, so symmetrised channels lose nothing.
    """

    def __init__(self, model: DiscreteModel, n: int | None = None, law: DatasetLaw | None = None,
                 cap: int | None = None, hyp_cap: int | None = None):
        self.model = model
        self.n = n
        self.tables = enumerate_hypotheses(model) if hyp_cap is None else enumerate_hypotheses(model, hyp_cap)
        self.d = distortion_matrix(model, self.tables)
        self.scale = max(float(self.d.max()), 1e-12)
        self.law = None
        self._conic_cache = None
        self._direct_cache = {}
        if n is not None:
            self.law = build_dataset_law(model, n, cap=cap, mode="type") if law is None else law
            post = posterior(model, self.law)
            self.p_zn = np.asarray(self.law.p_zn)
            self.dtilde = post.probs @ self.d
            self.dn = _dn_data(model.prior_w, self.law.p_zn_given_w, self.d)

    @property
    def lam_range(self) -> tuple[float, float, float]:
        # (smallest, largest, starting) slope tried before falling back to the closed-form endpoints
        return 1e-9 * self.scale, 1e4 * self.scale, 0.1 * self.scale

    def _need_n(self):
        if self.law is None:
            raise ValueError("this curve needs a sample count n")

    # direct solvers ---------------------------------------------------------

    def _ba_solver(self, source, dist, tol, max_iter):
        def solve(lam, warm):
            pt, chan = ba_direct(source, dist, lam, tol=tol, max_iter=max_iter, q0=warm)
            return pt, chan, source @ chan

        def point_fn(chan):
            return _direct_point(source, dist, chan, float("nan"))

        return solve, point_fn

    def lower_at(self, lam: float, tol=BA_TOL, max_iter=BA_MAX_ITER, q0=None):
        return ba_direct(self.model.prior_w, self.d, lam, tol, max_iter, q0)

    def upper_at(self, lam: float, tol=BA_TOL, max_iter=BA_MAX_ITER, q0=None):
        self._need_n()
        return ba_direct(self.p_zn, self.dtilde, lam, tol, max_iter, q0)

    def exact_at(self, lam: float, tol=DN_TOL, max_iter=DN_MAX_ITER, q0=None, method="conic"):
        """``D_n`` Lagrangian point at slope ``lam``; ``method`` as in :meth:`exact_rate`."""
        self._need_n()
        if method == "conic" and 0 < lam < math.inf:
            # interior point, then a monotone polish; the constant code guards the flat end
            cands = [self._conic_solver().solve_lagrangian(lam)]
            cands.append(dn_lagrangian_solve(self.dn, lam, cands[0][1], tol, POLISH_ITER))
            cands.append(dn_lagrangian_solve(self.dn, math.inf))
            best = min(cands, key=lambda c: c[0].distortion + lam * c[0].rate)
            vals = [c[0].distortion + lam * c[0].rate for c in cands]
            # the flat end is accepted when the interior point agrees with the constant code
            ok = (cands[0][0].converged or cands[1][0].converged
                  or (best is cands[2] and vals[0] - vals[2] <= 1e-6 * self.scale))
            pt = RDPoint(lam=float(lam), rate=best[0].rate, distortion=best[0].distortion, iterations=cands[1][0].iterations,
                         converged=ok, gap=_dn_fw_gap(self.dn, best[1], lam) if best is not cands[2] else 0.0)
            rows = best[1]
        elif method in ("conic", "mm"):
            pt, rows = dn_lagrangian_solve(self.dn, lam, q0, tol, max_iter)
        else:
            raise ValueError(f"unknown method {method!r}")
        return pt, _expand(self.dn, rows, self.p_zn.shape[0])

    def lower_rate(self, target: float, rate_tol=RATE_TOL, tol=BA_TOL, max_iter=BA_MAX_ITER, method="conic"):
        """``D^L`` at a target rate; ``method="ba"`` brackets the Blahut-Arimoto trace instead."""
        return self._direct_rate("lower", self.model.prior_w, self.d, target, rate_tol, tol, max_iter, method)

    def upper_rate(self, target: float, rate_tol=RATE_TOL, tol=BA_TOL, max_iter=BA_MAX_ITER, method="conic"):
        """``D^U_n`` at a target rate; ``method`` as in :meth:`lower_rate`."""
        self._need_n()
        return self._direct_rate("upper_n", self.p_zn, self.dtilde, target, rate_tol, tol, max_iter, method)

    def _direct_rate(self, kind, source, dist, target, rate_tol, tol, max_iter, method):
        if method == "ba":
            solve, point_fn = self._ba_solver(source, dist, tol, max_iter)
            return _hit_rate(target, solve, point_fn, *self.lam_range, rate_tol=rate_tol)
        if method != "conic":
            raise ValueError(f"unknown method {method!r}")
        # a direct problem is the dataset-constrained one with an identity observation channel
        if kind not in self._direct_cache:
            data = _dn_data(source, np.eye(len(source)), dist)
            self._direct_cache[kind] = (data, _ConicDn(data, direct=True))
        data, conic = self._direct_cache[kind]
        p0, r0 = dn_lagrangian_solve(data, 0.0)
        pinf, rinf = dn_lagrangian_solve(data, math.inf)
        if target >= p0.rate:
            pt, rows = _retarget(p0, target), r0
        elif target <= pinf.rate:
            pt, rows = _retarget(pinf, target), rinf
        else:
            pt, rows = conic.solve(target)
        return pt, _expand(data, rows, len(source))

    def exact_rate(self, target: float, rate_tol=RATE_TOL, tol=DN_TOL, max_iter=DN_MAX_ITER, method="conic"):
        """``D_n`` at a target rate.

        ``method="conic"`` solves the rate-constrained program directly with an
        interior-point exponential-cone solver; ``method="mm"`` traces the
        Lagrangian with the majorise-minimise iteration and hits the rate by
        bracketing. The closed-form endpoints are used whenever they apply.
        """
        self._need_n()
        data = self.dn

        def solve(lam, warm):
            pt, rows = dn_lagrangian_solve(data, lam, warm, tol, max_iter)
            return pt, rows, rows

        def point_fn(rows):
            return _dn_point(data, rows, float("nan"))

        if method == "mm":
            pt, rows = _hit_rate(target, solve, point_fn, *self.lam_range, rate_tol=rate_tol)
        elif method == "conic":
            p0, r0, _ = solve(0.0, None)
            pinf, rinf, _ = solve(math.inf, None)
            if target >= p0.rate:
                pt, rows = _retarget(p0, target), r0
            elif target <= pinf.rate:
                pt, rows = _retarget(pinf, target), rinf
            else:
                pt, rows = self._conic(target)
        else:
            raise ValueError(f"unknown method {method!r}")
        return pt, _expand(data, rows, self.p_zn.shape[0])

    def _conic_solver(self) -> _ConicDn:
        if self._conic_cache is None:
            self._conic_cache = _ConicDn(self.dn)
        return self._conic_cache

    def _conic(self, target: float):
        return self._conic_solver().solve(target)

    def at_rate(self, kind: str, target: float, **kw):
        return {"lower": self.lower_rate, "exact_n": self.exact_rate, "upper_n": self.upper_rate}[kind](target, **kw)

    def curve(self, kind: str, lambda_grid=None) -> RDCurve:
        grid = LAMBDA_GRID if lambda_grid is None else np.asarray(lambda_grid, float)
        solver = {"lower": self.lower_at, "upper_n": self.upper_at, "exact_n": self.exact_at}[kind]
        pts, chans = [], []
        warm = None
        for lam in [math.inf, *sorted(grid, reverse=True), 0.0]:
            pt, chan = solver(lam, q0=warm)
            if kind == "exact_n":
                warm = chan[self.dn.keep] if 0 < lam < math.inf else None
            else:
                src = self.model.prior_w if kind == "lower" else self.p_zn
                warm = src @ chan if 0 < lam < math.inf else None
            pts.append(pt)
            chans.append(chan)
        order = sorted(range(len(pts)), key=lambda i: (pts[i].rate, -pts[i].distortion))
        return RDCurve(kind=kind, points=[pts[i] for i in order], n=None if kind == "lower" else self.n,
                       channels=[chans[i] for i in order])


# --- public wrappers ----------------------------------------------------------


def curve_DL(model: DiscreteModel, lambda_grid=None) -> RDCurve:
    return RDProblem(model).curve("lower", lambda_grid)


def curve_DUn(model: DiscreteModel, n: int, lambda_grid=None, cap: int | None = None) -> RDCurve:
    return RDProblem(model, n, cap=cap).curve("upper_n", lambda_grid)


def curve_Dn(model: DiscreteModel, n: int, lambda_grid=None, cap: int | None = None) -> RDCurve:
    return RDProblem(model, n, cap=cap).curve("exact_n", lambda_grid)


@dataclass(frozen=True)
class DnSolution:
    distortion: float
    rate: float
    channel: np.ndarray = field(repr=False)
    gap: float = 0.0
    converged: bool = True
    point: RDPoint | None = None


def solve_Dn(model: DiscreteModel, n: int, rate: float, rate_tol: float = RATE_TOL, tol: float = DN_TOL,
             max_iter: int = DN_MAX_ITER, problem: RDProblem | None = None, method: str = "conic") -> DnSolution:
    """``D_n(R)``: least expected distortion over channels ``P(h | z^n)`` with ``I(W; h) <= R``.

    The channel is indexed by the type cells of the dataset law.
    """
    if rate < 0:
        raise ValueError("rate must be >= 0")
    prob = RDProblem(model, n) if problem is None else problem
    pt, chan = prob.exact_rate(rate, rate_tol=rate_tol, tol=tol, max_iter=max_iter, method=method)
    return DnSolution(distortion=pt.distortion, rate=pt.rate, channel=chan, gap=pt.gap,
                      converged=pt.converged, point=pt)


def check_theorem3(model: DiscreteModel, n: int, rate: float, tol: float = 1e-6,
                   problem: RDProblem | None = None) -> dict:
    """Check ``D^U_n(R) <= D^L(R) + sqrt(b^2/2 * I(W; h_R | Z^n))``.

    ``h_R`` is drawn from the solution channel of the lower problem and is
    independent of ``Z^n`` given ``W``.
    """
    prob = RDProblem(model, n) if problem is None else problem
    lpt, lchan = prob.lower_rate(rate)
    upt, _ = prob.upper_rate(rate)
    mi = cond_mi_w_h_given_zn(model.prior_w, lchan, prob.law).value
    bound = lpt.distortion + math.sqrt(model.b**2 / 2 * max(mi, 0.0))
    slack = bound + tol - upt.distortion
    return {"n": n, "rate": rate, "d_lower": lpt.distortion, "d_upper": upt.distortion, "mi_w_h_given_zn": mi,
            "bound": bound, "holds": bool(slack >= 0), "slack": slack}


def check_theorem4_convergence(model: DiscreteModel, n_list, rate_grid, require_quadratic: bool = True) -> dict:
    """Tabulate ``max_R |D^U_n(R) - D^L(R)|`` and ``delta_n`` over ``n_list``."""
    n_list = sorted(n_list)
    lower = RDProblem(model)
    d_low = {r: lower.lower_rate(r)[0].distortion for r in rate_grid}
    gaps, deltas = [], []
    for n in n_list:
        prob = RDProblem(model, n)
        gaps.append(max(abs(prob.upper_rate(r)[0].distortion - d_low[r]) for r in rate_grid))
        deltas.append(delta_n(model, n, law=prob.law, require_quadratic=require_quadratic))
    return {
        "n": n_list,
        "gap": gaps,
        "delta": deltas,
        "gap_shrinks": bool(gaps[-1] < gaps[0]) if len(n_list) > 1 else True,
        "delta_shrinks": bool(deltas[-1] < deltas[0]) if len(n_list) > 1 else True,
        "delta_monotone": bool(all(b <= a + 1e-12 for a, b in zip(deltas, deltas[1:]))),
    }


def full_rate_endpoint(model: DiscreteModel, n: int, problem: RDProblem | None = None) -> dict:
    """``D_n(I(W; Z^n))`` against the exact minimum excess risk."""
    from .info import mi_w_zn

    prob = RDProblem(model, n) if problem is None else problem
    rate = mi_w_zn(model, n, law=prob.law).value
    sol = solve_Dn(model, n, rate, problem=prob)
    mer = mer_exact(model, n, law=prob.law).mer
    return {"n": n, "rate": rate, "d_n": sol.distortion, "mer": mer, "error": abs(sol.distortion - mer)}
