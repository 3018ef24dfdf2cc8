"""Finite probability objects and the enumerated dataset law.

Everything downstream works on a :class:`DiscreteModel`: a prior over a finite
parameter alphabet ``W``, an input law over ``X`` that does not depend on the
parameter, a channel ``P(y | x, w)`` and a bounded loss on ``Y x Y``.

Datasets ``z^n`` are tuples of ``n`` symbols ``z = x * |Y| + y`` ordered
lexicographically with the first sample most significant. A
:class:`DatasetLaw` can also be built over *types* (multisets of samples),
which is exact for every quantity in this package because the posterior only
depends on the type.
"""

from __future__ import annotations

import itertools
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import gammaln

SIMPLEX_TOL = 1e-12
DEFAULT_CAP_CELLS = 10**7
DEFAULT_CAP_HYPOTHESES = 4096
CAP_ENV = "MER_RD_CAP_CELLS"


class CapExceededError(RuntimeError):
    """An enumeration would exceed the configured cap."""

    def __init__(self, what: str, required: int, cap: int):
        self.what = what
        self.required = required
        self.cap = cap
        super().__init__(f"{what} needs {required} cells, cap is {cap}; raise the cap to at least {required}")


class ModelError(ValueError):
    """A model failed validation."""

    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("invalid model: " + "; ".join(violations))


def default_cap() -> int:
    value = os.environ.get(CAP_ENV)
    return int(value) if value else DEFAULT_CAP_CELLS


def simplex_violations(probs, name: str, tol: float = SIMPLEX_TOL) -> list[str]:
    """Violations of the simplex invariant for the last axis of ``probs``."""
    probs = np.asarray(probs, dtype=float)
    out = []
    if probs.size == 0 or probs.shape[-1] == 0:
        return [f"{name}: empty alphabet"]
    if not np.all(np.isfinite(probs)):
        out.append(f"{name}: non-finite entry")
        return out
    neg = np.argwhere(probs < 0)
    for idx in neg[:5]:
        out.append(f"{name}{list(idx)}: probability < 0 ({probs[tuple(idx)]:g})")
    sums = probs.sum(axis=-1)
    if sums.ndim == 0:
        if abs(sums - 1.0) > tol:
            out.append(f"{name}: row sum != 1 ({float(sums):.12g})")
        return out
    for idx in np.argwhere(np.abs(sums - 1.0) > tol)[:5]:
        out.append(f"{name}{list(idx)}: row sum != 1 ({sums[tuple(idx)]:.12g})")
    return out


@dataclass(frozen=True)
class DiscreteModel:
    """A finite Bayesian learning problem.

    ``py_given_xw`` is indexed ``[w, x, y]``; ``loss`` is indexed
    ``[y, y_hat]`` with values in ``[0, b]``. ``y_values`` optionally carries
    the real coordinates of the ``Y`` symbols (used by metric-loss checks).
    """

    prior_w: np.ndarray
    px: np.ndarray
    py_given_xw: np.ndarray
    loss: np.ndarray
    b: float
    y_values: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        for attr in ("prior_w", "px", "py_given_xw", "loss"):
            arr = np.array(getattr(self, attr), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)
        if self.y_values is not None:
            yv = np.array(self.y_values, dtype=float)
            yv.setflags(write=False)
            object.__setattr__(self, "y_values", yv)
        object.__setattr__(self, "b", float(self.b))

    @property
    def n_w(self) -> int:
        return self.prior_w.shape[0]

    @property
    def n_x(self) -> int:
        return self.px.shape[0]

    @property
    def n_y(self) -> int:
        return self.py_given_xw.shape[-1]

    @property
    def n_z(self) -> int:
        return self.n_x * self.n_y

    def pz_given_w(self) -> np.ndarray:
        """Single-sample law ``P(z | w)`` with ``z = x * |Y| + y``."""
        return (self.px[None, :, None] * self.py_given_xw).reshape(self.n_w, self.n_z)

    def to_json(self) -> dict:
        out = {
            "w_prior": self.prior_w.tolist(),
            "p_x": self.px.tolist(),
            "p_y_given_xw": self.py_given_xw.tolist(),
            "loss": self.loss.tolist(),
            "b": self.b,
        }
        if self.y_values is not None:
            out["y_values"] = self.y_values.tolist()
        if self.name:
            out["name"] = self.name
        return out

    @classmethod
    def from_json(cls, data: dict) -> "DiscreteModel":
        missing = [k for k in ("w_prior", "p_x", "p_y_given_xw", "loss", "b") if k not in data]
        if missing:
            raise ModelError([f"missing field {k!r}" for k in missing])
        return cls(
            prior_w=data["w_prior"],
            px=data["p_x"],
            py_given_xw=data["p_y_given_xw"],
            loss=data["loss"],
            b=data["b"],
            y_values=data.get("y_values"),
            name=data.get("name", ""),
        )


def validate_model(model: DiscreteModel) -> list[str]:
    """Every invariant violation of ``model``; an empty list means valid."""
    out = []
    out += simplex_violations(model.prior_w, "w_prior")
    out += simplex_violations(model.px, "p_x")
    pyx = model.py_given_xw
    if pyx.ndim != 3:
        out.append(f"p_y_given_xw: expected 3-D array [w][x][y], got {pyx.ndim}-D")
        return out
    if pyx.shape[0] != model.prior_w.shape[0]:
        out.append(f"p_y_given_xw: {pyx.shape[0]} parameter rows but w_prior has {model.prior_w.shape[0]}")
    if pyx.shape[1] != model.px.shape[0]:
        out.append(f"p_y_given_xw: {pyx.shape[1]} input rows but p_x has {model.px.shape[0]}")
    out += simplex_violations(pyx, "p_y_given_xw")
    loss = model.loss
    ny = pyx.shape[-1]
    if loss.shape != (ny, ny):
        out.append(f"loss: expected shape ({ny}, {ny}), got {loss.shape}")
    else:
        for idx in np.argwhere(loss < 0)[:5]:
            out.append(f"loss{list(idx)}: loss < 0 ({loss[tuple(idx)]:g})")
        for idx in np.argwhere(loss > model.b * (1 + 1e-12))[:5]:
            out.append(f"loss{list(idx)}: loss > b ({loss[tuple(idx)]:g} > {model.b:g})")
    if not np.isfinite(model.b) or model.b < 0:
        out.append(f"b: must be finite and >= 0, got {model.b}")
    if model.y_values is not None and model.y_values.shape != (ny,):
        out.append(f"y_values: expected {ny} entries, got {model.y_values.shape}")
    return out


def check_model(model: DiscreteModel) -> DiscreteModel:
    violations = validate_model(model)
    if violations:
        raise ModelError(violations)
    return model


def load_model(path) -> DiscreteModel:
    data = json.loads(Path(path).read_text())
    return check_model(DiscreteModel.from_json(data))


@dataclass(frozen=True)
class DatasetLaw:
    """Law of the training set ``Z^n`` under every parameter value.

    Columns of ``p_zn_given_w`` are dataset cells. In ``"sequence"`` mode a
    cell is one ordered tuple; in ``"type"`` mode a cell is a multiset of
    samples and its probability is the total over the ``multiplicity``
    orderings. ``tuples[j]`` is the lexicographically smallest ordering.
    """

    n: int
    z_alphabet_size: int
    p_zn_given_w: np.ndarray
    p_zn: np.ndarray
    tuples: np.ndarray
    multiplicity: np.ndarray
    mode: str = "sequence"
    counts: np.ndarray = field(default=None, repr=False)

    @property
    def n_cells(self) -> int:
        return self.p_zn.shape[0]


def _sequence_law(pz: np.ndarray, n: int):
    n_w, n_z = pz.shape
    rows = np.ones((n_w, 1))
    for _ in range(n):
        rows = (rows[:, :, None] * pz[:, None, :]).reshape(n_w, -1)
    combos = list(itertools.product(range(n_z), repeat=n))
    tuples = np.array(combos, dtype=np.int64).reshape(len(combos), n)
    return rows, tuples, np.ones(rows.shape[1], dtype=np.int64)


def _type_law(pz: np.ndarray, n: int):
    n_w, n_z = pz.shape
    combos = list(itertools.combinations_with_replacement(range(n_z), n))
    tuples = np.array(combos, dtype=np.int64).reshape(len(combos), n)
    counts = np.zeros((tuples.shape[0], n_z), dtype=np.int64)
    for j in range(n):
        np.add.at(counts, (np.arange(tuples.shape[0]), tuples[:, j]), 1)
    log_mult = gammaln(n + 1) - gammaln(counts + 1).sum(axis=1)
    # 0 * log 0 contributes nothing; a positive count on a zero cell gives -inf
    with np.errstate(divide="ignore"):
        log_pz = np.where(pz > 0, np.log(np.where(pz > 0, pz, 1.0)), -np.inf)
    ll = np.zeros((n_w, tuples.shape[0]))
    for z in range(n_z):
        c = counts[:, z]
        hit = c > 0
        if hit.any():
            ll[:, hit] += c[hit][None, :] * log_pz[:, z][:, None]
    rows = np.exp(ll + log_mult[None, :])
    mult = np.rint(np.exp(log_mult)).astype(np.int64)
    return rows, tuples, mult, counts


def count_dataset_cells(model: DiscreteModel, n: int, mode: str = "sequence") -> int:
    if mode == "type":
        return math.comb(model.n_z + n - 1, n)
    return model.n_z**n


def build_dataset_law(model: DiscreteModel, n: int, cap: int | None = None, mode: str = "sequence") -> DatasetLaw:
    """Enumerate the law of ``Z^n`` for every parameter value.

    ``cap`` bounds the number of dataset cells; the default honours the
    ``MER_RD_CAP_CELLS`` environment variable.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if mode not in ("sequence", "type"):
        raise ValueError(f"unknown dataset mode {mode!r}")
    cap = default_cap() if cap is None else cap
    cells = count_dataset_cells(model, n, mode)
    if cells * model.n_w > cap:
        raise CapExceededError(f"dataset law (n={n}, {mode})", cells * model.n_w, cap)
    pz = model.pz_given_w()
    counts = None
    if mode == "sequence":
        rows, tuples, mult = _sequence_law(pz, n)
    else:
        rows, tuples, mult, counts = _type_law(pz, n)
    rows.setflags(write=False)
    p_zn = model.prior_w @ rows
    p_zn.setflags(write=False)
    return DatasetLaw(
        n=n,
        z_alphabet_size=model.n_z**n,
        p_zn_given_w=rows,
        p_zn=p_zn,
        tuples=tuples,
        multiplicity=mult,
        mode=mode,
        counts=counts,
    )


def enumerate_hypotheses(model: DiscreteModel, cap: int = DEFAULT_CAP_HYPOTHESES) -> np.ndarray:
    """All deterministic decision tables ``X -> Y`` in lexicographic order.

    Row ``k`` holds the predicted ``Y`` index for each ``X`` symbol, first
    ``X`` symbol most significant.
    """
    count = model.n_y**model.n_x
    if count > cap:
        raise CapExceededError("hypothesis enumeration", count, cap)
    return np.array(list(itertools.product(range(model.n_y), repeat=model.n_x)), dtype=np.int64).reshape(count, model.n_x)


def hypothesis_index(tables: np.ndarray, n_y: int) -> np.ndarray:
    """Position of each table in the lexicographic enumeration."""
    tables = np.atleast_2d(tables)
    weights = n_y ** np.arange(tables.shape[1] - 1, -1, -1)
    return tables @ weights
