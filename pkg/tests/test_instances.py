import json

import numpy as np
import pytest
from battery import random_model

from merrd import DiscreteModel, RDProblem, ba_direct, mer_exact, ub_dataset
from merrd.instances import (GaussianLocationSpec, LinearRegressionSpec, ReparameterizationError,
                             discretize_gaussian_location, discretize_linear_regression, instance_from_json,
                             l2_distortion, load_instance, project_to_hypothesis_class, projected_problem,
                             relabel_problem, reparameterize_distortion, toy_counterexample)
from merrd.risk import bayes_decisions, distortion_matrix, hypothesis_distance_matrix

LAMS = [0.01, 0.05, 0.2, 1.0]


def test_gaussian_location_rows_normalised():
    m, spec = discretize_gaussian_location(GaussianLocationSpec(sigma=0.5, w_grid=7, y_grid=30))
    np.testing.assert_allclose(m.py_given_xw.sum(axis=2), 1.0, atol=1e-14)
    assert spec.p == 1 and spec.v_p == 2.0
    assert m.b == pytest.approx((m.y_values[-1] - m.y_values[0] + (m.y_values[1] - m.y_values[0])) ** 2)


def test_gaussian_location_grid_refinement_is_stable():
    coarse, _ = discretize_gaussian_location(GaussianLocationSpec(sigma=0.5, w_grid=5, y_grid=40))
    fine, _ = discretize_gaussian_location(GaussianLocationSpec(sigma=0.5, w_grid=5, y_grid=80))
    a, b = mer_exact(coarse, 2).mer, mer_exact(fine, 2).mer
    assert abs(a - b) / b < 0.02


def test_gaussian_location_noise_level():
    # more noise leaves more excess risk; both values sit below the dataset bound
    quiet, _ = discretize_gaussian_location(GaussianLocationSpec(sigma=1.0, w_grid=5, y_grid=8))
    loud, _ = discretize_gaussian_location(GaussianLocationSpec(sigma=10.0, w_grid=5, y_grid=8))
    mq, ml = mer_exact(quiet, 2).mer, mer_exact(loud, 2).mer
    assert mq < ml
    assert mq <= ub_dataset(quiet, 2) and ml <= ub_dataset(loud, 2)


def test_linear_regression_p1_is_scaled_location():
    m, _, grid = discretize_linear_regression(LinearRegressionSpec(p=1, sigma=0.5, sigma_x=(1.0,), w_grid=5, x_grid=3))
    y, step = m.y_values, m.y_values[1] - m.y_values[0]
    for k, w in enumerate(grid.w_points[:, 0]):
        for j, x in enumerate(grid.x_points[:, 0]):
            dens = np.exp(-0.5 * ((y - w * x) / 0.5) ** 2)
            np.testing.assert_allclose(m.py_given_xw[k, j], dens / dens.sum(), atol=1e-12)
    assert step == pytest.approx(0.1)


def test_linear_regression_parameter_distortion():
    sx = np.array([[1.0, 0.5], [0.5, 1.0]])
    m, _, grid = discretize_linear_regression(LinearRegressionSpec(p=2, sigma=0.5, sigma_x=((1.0, 0.5), (0.5, 1.0)),
                                                                   w_grid=7, x_grid=9, x_radius=3.0, y_step=0.02))
    d = hypothesis_distance_matrix(m)
    assert np.all(np.diag(d) <= 1e-12)
    off = ~np.eye(len(d), dtype=bool)
    assert d[off].min() > 0
    diff = grid.w_points[:, None, :] - grid.w_points[None, :, :]
    quad = np.einsum("abi,ij,abj->ab", diff, sx, diff)
    far = quad > 0.1
    assert np.max(np.abs(d[far] / quad[far] - 1)) < 0.05


def _line_model():
    """Parameters on the ``Y`` grid with symmetric noise, so ``E[Y | w] = w`` lies on the grid."""
    step = 0.25
    w = np.arange(0, 5) * step
    y = np.arange(-1, 6) * step
    pyw = np.zeros((5, 7))
    for k in range(5):
        pyw[k, k:k + 3] = [0.25, 0.5, 0.25]
    return DiscreteModel(prior_w=[0.1, 0.2, 0.3, 0.25, 0.15], px=[1.0], py_given_xw=pyw[:, None, :],
                         loss=(y[:, None] - y[None, :]) ** 2, b=float((y[-1] - y[0]) ** 2), y_values=y), w


def test_quadratic_distortion_is_l2_distance_on_grid():
    m, w = _line_model()
    tables = np.arange(7)[:, None]
    d = distortion_matrix(m, tables)
    np.testing.assert_allclose(d, l2_distortion(m, tables), atol=1e-14)
    np.testing.assert_allclose(d, (w[:, None] - m.y_values[None, :]) ** 2, atol=1e-14)


def test_projection_cases():
    m, w = _line_model()
    hstar = bayes_decisions(m)
    for k in range(5):
        assert project_to_hypothesis_class(m, hstar[k]) == k
    # a function between two Bayes functions, nudged toward the first
    mid = 0.5 * (w[1] + w[2]) - 1e-3
    assert project_to_hypothesis_class(m, np.array([mid])) == 1
    dists = (w - mid) ** 2
    assert project_to_hypothesis_class(m, np.array([mid])) == int(np.argmin(dists))


def test_projection_weighted_by_input_law():
    y = np.array([0.0, 1.0])
    pyx = np.array([[[1, 0], [1, 0]], [[0, 1], [0, 1]], [[1, 0], [0, 1]]], dtype=float)
    m = DiscreteModel(prior_w=np.full(3, 1 / 3), px=[0.8, 0.2], py_given_xw=pyx, loss=(y[:, None] - y[None, :]) ** 2,
                      b=1.0, y_values=y)
    # disagrees with w=2 only on the light input and with w=0 only on the heavy one
    assert project_to_hypothesis_class(m, np.array([1, 0])) == 1
    assert project_to_hypothesis_class(m, np.array([0.0, 0.6])) == 2


def test_identity_reparameterization():
    m = random_model(np.random.default_rng(0), 3, 2, 2)
    prob = RDProblem(m)
    rep = reparameterize_distortion(m.prior_w, prob.d, np.arange(3), np.arange(prob.d.shape[1]))
    np.testing.assert_array_equal(rep.dist, prob.d)
    np.testing.assert_array_equal(rep.source, m.prior_w)


def test_relabeling_leaves_curve_unchanged():
    m = random_model(np.random.default_rng(4), 4, 2, 2)
    d = RDProblem(m).d
    perm = np.array([2, 0, 3, 1])
    src2, d2 = relabel_problem(m.prior_w, d, perm)
    for lam in LAMS:
        a, _ = ba_direct(m.prior_w, d, lam, tol=1e-12)
        b, _ = ba_direct(src2, d2, lam, tol=1e-12)
        assert a.distortion == pytest.approx(b.distortion, abs=1e-8)
        assert a.rate == pytest.approx(b.rate, abs=1e-8)


def test_reparameterization_merges_and_rejects():
    d = np.array([[0.0, 1.0, 1.0], [0.0, 1.0, 1.0], [1.0, 0.0, 0.0]])
    rep = reparameterize_distortion([0.2, 0.3, 0.5], d, [0, 0, 1], [0, 1, 1])
    np.testing.assert_allclose(rep.source, [0.5, 0.5])
    np.testing.assert_array_equal(rep.dist, [[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(ReparameterizationError):
        reparameterize_distortion([0.2, 0.3, 0.5], d, [0, 1, 1], [0, 1, 1])
    with pytest.raises(ReparameterizationError):
        reparameterize_distortion([0.2, 0.3, 0.5], d, [0, 0, 1], [0, 2, 2])


def test_projected_problem_matches_lower_curve_when_class_is_an_interval():
    # the Bayes functions fill every grid point of an interval, so projection contracts distances
    m, _ = _line_model()
    full = RDProblem(m)
    proj = projected_problem(m)
    for lam in LAMS:
        a, _ = full.lower_at(lam, tol=1e-12)
        b, _ = ba_direct(proj.source, proj.dist, lam, tol=1e-12)
        assert b.distortion + lam * b.rate == pytest.approx(a.distortion + lam * a.rate, abs=1e-9)


def test_projected_problem_never_below_lower_curve():
    # with a finite candidate set the projected problem only removes reproductions
    m = random_model(np.random.default_rng(6), 4, 2, 3, loss="squared")
    full = RDProblem(m)
    proj = projected_problem(m)
    for lam in LAMS:
        a, _ = full.lower_at(lam, tol=1e-12)
        b, _ = ba_direct(proj.source, proj.dist, lam, tol=1e-12)
        assert b.distortion + lam * b.rate >= a.distortion + lam * a.rate - 1e-9


def test_toy_counterexample_structure():
    toy = toy_counterexample()
    assert toy.n_w == 9
    assert mer_exact(toy, 0).mer == pytest.approx(2 / 3, abs=1e-12)
    assert mer_exact(toy, 1).mer == pytest.approx(0.0, abs=1e-12)


def test_instance_files(tmp_path):
    m, spec = instance_from_json({"kind": "gaussian_location", "sigma": 0.5, "w_grid": 5, "y_grid": 8})
    assert m.n_w == 5 and spec.p == 1
    path = tmp_path / "lr.json"
    path.write_text(json.dumps({"kind": "linear_regression", "p": 2, "sigma": 1.0, "sigma_x": [[1, 0], [0, 1]],
                                "w_grid": 3, "x_grid": 3}))
    lm, lspec = load_instance(path)
    assert lm.n_w == 9 and lspec.p == 2
    toy, none = instance_from_json({"kind": "toy"})
    assert none is None and toy.n_w == 9
    with pytest.raises(ValueError):
        instance_from_json({"kind": "nope"})
    with pytest.raises(ValueError):
        instance_from_json({"kind": "gaussian_location", "sigma": -1, "w_grid": 5, "y_grid": 8})
