import json
import math

import numpy as np
import pytest

from rrglm import (
    DataSet,
    FitOptions,
    InputError,
    bic_correction,
    constrained_fit,
    fit_path,
    hard,
    hard_ridge,
    lambda_grid,
    make_folds,
    pcv,
    penalized_fit,
    ridge_glm_fit,
    soft,
)
from rrglm import tuning
from rrglm.solvers import PathEntry, SolutionPath, ridge_kkt_residual
from rrglm.tuning import lambda_max
from synth import bernoulli_lowrank, gaussian_lowrank


def test_lambda_grid_single_point():
    data = gaussian_lowrank(0, n=60, p=5, m=4)
    g = lambda_grid(data, 1, 0.1)
    assert g.shape == (1,) and g[0] == lambda_max(data, hard(0.0))


def test_lambda_grid_endpoints():
    data = gaussian_lowrank(0, n=60, p=5, m=4)
    g = lambda_grid(data, 5, 0.01)
    assert len(g) == 5
    assert g[0] == pytest.approx(lambda_max(data, hard(0.0)), rel=1e-15)
    assert g[-1] == pytest.approx(0.01 * g[0], rel=1e-12)
    assert np.allclose(np.diff(np.log(g)), np.log(0.01) / 4)


@pytest.mark.parametrize("L,ratio", [(0, 0.1), (2.5, 0.1), (3, 0.0), (3, 1.0)])
def test_lambda_grid_validation(L, ratio):
    data = gaussian_lowrank(0, n=30, p=3, m=2)
    with pytest.raises(InputError):
        lambda_grid(data, L, ratio)


@pytest.mark.parametrize("family", ["gaussian", "bernoulli"])
@pytest.mark.parametrize("rule", [soft(0.0), hard(0.0), hard_ridge(0.0, 0.1)], ids=lambda r: r.kind)
def test_lambda_max_zeroes_slope(family, rule):
    data = gaussian_lowrank(1, n=80, p=6, m=4) if family == "gaussian" else bernoulli_lowrank(1, n=80, p=6, m=4)
    top = lambda_max(data, rule)
    for factor in (1.0, 1.5):
        est = penalized_fit(data, rule.with_lambda(top * factor * (1 + 1e-9)))
        assert est.rank == 0
        assert np.all(est.B_slope == 0.0)
    assert penalized_fit(data, rule.with_lambda(0.9 * top)).rank > 0


def test_bic_correction_examples():
    n, p, m = 100, 6, 4
    assert bic_correction(3.0, n, 0, p, m) == pytest.approx(3.0 + math.log(n) * m)
    assert bic_correction(3.0, n, m, p, m) == pytest.approx(3.0 + math.log(n) * (p * m + m))
    vals = [bic_correction(0.0, n, r, p, m) for r in range(min(p, m) + 1)]
    assert all(a < b for a, b in zip(vals, vals[1:]))
    with pytest.raises(InputError):
        bic_correction(1.0, n, -1, p, m)


@pytest.mark.parametrize("n,K", [(10, 3), (400, 5), (7, 7), (11, 2)])
def test_folds_partition_evenly(n, K):
    folds = make_folds(n, K, 3)
    sizes = [len(f) for f in folds]
    assert len(folds) == K and max(sizes) - min(sizes) <= 1
    assert np.array_equal(np.sort(np.concatenate(folds)), np.arange(n))
    again = make_folds(n, K, 3)
    assert all(np.array_equal(a, b) for a, b in zip(folds, again))


@pytest.mark.parametrize("K", [1, 11])
def test_folds_validation(K):
    with pytest.raises(InputError):
        make_folds(10, K, 0)


def test_single_candidate_selected():
    data = gaussian_lowrank(2, n=60, p=5, m=4)
    path = fit_path(data, hard(0.0), [0.3 * lambda_max(data, hard(0.0))])
    rep = pcv(data, path, K=3)
    assert rep.selected == 0
    assert math.isfinite(rep.candidates[0].score)


def test_leave_one_out_finite():
    data = gaussian_lowrank(3, n=12, p=3, m=2)
    path = fit_path(data, hard(0.0), lambda_grid(data, 4, 0.05))
    rep = pcv(data, path, K=data.n)
    assert rep.fold_sizes == [1] * data.n
    assert all(math.isfinite(c.score) for c in rep.candidates)


def test_failed_entry_scored_infinite():
    data = gaussian_lowrank(4, n=60, p=5, m=4)
    good = fit_path(data, hard(0.0), [0.3 * lambda_max(data, hard(0.0))]).entries[0]
    path = SolutionPath("penalized", hard(0.0), [PathEntry(1.0, 0.0, None, True, "boom"), good])
    rep = pcv(data, path, K=3)
    assert rep.candidates[0].failed and rep.candidates[0].score == math.inf
    assert rep.selected == 1
    assert rep.to_dict()["candidates"][0]["score"] is None


def test_separated_fold_fit_is_flagged():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((40, 2))
    Y = (x[:, :1] > 0).astype(float)
    data = DataSet.from_predictors(x, Y, "bernoulli")
    path = fit_path(data, hard(0.0), [1e-3], FitOptions(max_iter=50))
    rep = pcv(data, path, K=4, eta=0.0)
    assert rep.candidates[0].failed
    assert rep.selected is None


def test_ties_go_to_smaller_rank(monkeypatch):
    data = gaussian_lowrank(5, n=60, p=5, m=4)
    path = SolutionPath("constrained", hard(0.0), [
        PathEntry(r, 0.0, constrained_fit(data, r)) for r in (3, 1, 2)
    ])
    monkeypatch.setattr(tuning, "_cv_deviance", lambda *a, **k: 1.0)
    rep = pcv(data, path, K=3, use_bic=False)
    assert rep.selected == 1 and rep.selected_rank == 1


def test_report_deterministic_and_jobs_invariant():
    data = bernoulli_lowrank(6, n=120, p=6, m=4)
    path = fit_path(data, hard(0.0), lambda_grid(data, 6, 0.05))
    a = pcv(data, path, K=4, seed=9).to_json()
    b = pcv(data, path, K=4, seed=9, jobs=3).to_json()
    assert a == b
    assert json.loads(a)["seed"] == 9


def test_gaussian_rank_recovered():
    data = gaussian_lowrank(7)
    path = fit_path(data, hard(0.0), lambda_grid(data, 20, 1e-3))
    assert pcv(data, path, K=5).selected_rank == 2


@pytest.mark.parametrize("family", ["gaussian", "bernoulli"])
def test_hard_ridge_estimate_is_ridge_fit_on_projected_design(family):
    data = gaussian_lowrank(8, n=100, p=8, m=5) if family == "gaussian" else bernoulli_lowrank(8, n=200, p=8, m=5)
    eta = 0.1
    rule = hard_ridge(0.3 * lambda_max(data, hard_ridge(0.0, eta)), eta)
    est = penalized_fit(data, rule, FitOptions(tol=1e-12, max_iter=100000))
    svd = est.svd.truncate(est.rank)
    Z = np.column_stack([data.x0, data.X_slope @ svd.U])
    C = np.vstack([est.B[:1], svd.s[:, None] * svd.V.T])
    w = eta * est.scale**2
    fit = ridge_glm_fit(Z, data.Y, data.family, w)
    assert np.linalg.norm(fit.coef - C) <= 1e-5 * np.linalg.norm(C)
    assert ridge_kkt_residual(Z, data.Y, data.family, w, C) <= 1e-5
