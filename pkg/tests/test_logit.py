import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import optimize, special

from netform.features import build_features, table2_recipe
from netform.graph import VillageNetwork
from netform.households import GeneratorSpec, generate_synthetic
from netform.logit import DyadDesign, RankWarning, SeparationError, fit_logit, stack_dyads


def design(n=600, k=3, seed=0, beta=None, groups=20):
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(n), rng.normal(size=(n, k - 1))])
    beta = np.zeros(k) if beta is None else np.asarray(beta)
    y = (rng.random(n) < special.expit(X @ beta)).astype(float)
    names = tuple(["intercept"] + [f"x{i}" for i in range(1, k)])
    return DyadDesign(X, y, names, np.arange(n) % groups)


def negll(b, X, y):
    eta = X @ b
    return -np.sum(y * eta - np.logaddexp(0, eta))


def test_intercept_only_closed_form():
    d = design(n=999, k=1, seed=3, beta=[-0.7])
    fit = fit_logit(d)
    p = d.y.mean()
    assert fit.coefficients[0] == pytest.approx(np.log(p / (1 - p)), abs=1e-10)
    assert fit.converged and fit.gradient_norm < 1e-8


def test_matches_generic_optimizer_and_numeric_information():
    d = design(n=800, k=4, seed=1, beta=[-0.5, 0.8, -0.3, 0.0])
    fit = fit_logit(d)
    ref = optimize.minimize(negll, np.zeros(4), args=(d.X, d.y), method="BFGS", options={"gtol": 1e-9})
    assert np.allclose(fit.coefficients, ref.x, atol=1e-5)
    assert fit.loglik == pytest.approx(-ref.fun, abs=1e-8)
    # numerical Hessian of the log-likelihood by central differences of the score
    def score(b):
        return d.X.T @ (d.y - special.expit(d.X @ b))

    h = 1e-5
    H = np.column_stack([(score(fit.coefficients + h * e) - score(fit.coefficients - h * e)) / (2 * h) for e in np.eye(4)])
    assert np.allclose(fit.standard_errors, np.sqrt(np.diag(np.linalg.inv(-H))), rtol=1e-5)
    resid = d.y - special.expit(d.X @ fit.coefficients)
    assert np.max(np.abs(d.X.T @ resid)) < 1e-8


def test_zero_truth_within_three_se():
    fit = fit_logit(design(n=3000, k=4, seed=7, beta=[0, 0, 0, 0]))
    assert np.all(np.abs(fit.coefficients) < 3 * fit.standard_errors)


@given(st.randoms(use_true_random=False))
def test_row_order_invariance(rnd):
    d = design(n=300, k=3, seed=5, beta=[0.2, -0.4, 0.6])
    perm = list(range(d.nobs))
    rnd.shuffle(perm)
    e = DyadDesign(d.X[perm], d.y[perm], d.names, d.groups[perm])
    a, b = fit_logit(d), fit_logit(e)
    assert np.allclose(a.coefficients, b.coefficients, atol=1e-10)
    assert np.allclose(a.standard_errors, b.standard_errors, rtol=1e-8)


def test_cluster_sandwich_by_hand():
    d = design(n=500, k=3, seed=9, beta=[0.1, 0.5, -0.5], groups=25)
    fit = fit_logit(d, cluster=True)
    p = special.expit(d.X @ fit.coefficients)
    bread = np.linalg.inv((d.X * (p * (1 - p))[:, None]).T @ d.X)
    meat = np.zeros((3, 3))
    for g in np.unique(d.groups):
        m = d.groups == g
        s = d.X[m].T @ (d.y[m] - p[m])
        meat += np.outer(s, s)
    cov = bread @ meat @ bread * 25 / 24
    assert np.allclose(fit.standard_errors, np.sqrt(np.diag(cov)), rtol=1e-10)
    assert fit.se_type == "cluster"


def test_separation_names_the_column():
    d = design(n=200, k=2, seed=2)
    y = (d.X[:, 1] > 0).astype(float)
    with pytest.raises(SeparationError, match="x1"):
        fit_logit(DyadDesign(d.X, y, d.names, d.groups))


def test_collinear_column_dropped_with_warning():
    d = design(n=300, k=3, seed=4, beta=[0, 1, 0])
    X = np.column_stack([d.X, 2 * d.X[:, 1]])
    with pytest.warns(RankWarning, match="x3"):
        fit = fit_logit(DyadDesign(X, d.y, d.names + ("x3",), d.groups))
    assert fit.dropped == ("x3",) and fit.names == d.names


def test_stack_dyads_and_gender_specs():
    vs = generate_synthetic(GeneratorSpec.from_dict({"villages": 6, "size": {"min": 8, "max": 10}}), seed=1)
    rng = np.random.default_rng(0)
    recipe = table2_recipe("male_female")
    recipe = type(recipe)(u=recipe.u[:1] + ("gender",) + recipe.u[1:])
    feats = [build_features(v, recipe) for v in vs]
    nets = []
    for v in vs:
        a = (rng.random((v.n, v.n)) < 0.3).astype(np.uint8)
        np.fill_diagonal(a, 0)
        nets.append(VillageNetwork(v.village_id, a))
    d = stack_dyads(nets, feats)
    assert d.nobs == sum(v.n * (v.n - 1) for v in vs)
    assert d.y.sum() == sum(n.adjacency.sum() for n in nets)
    g = fit_logit(d, "gender")
    mf = fit_logit(d, "male_female")
    assert "gender" in g.names and "male" not in g.names and len(g.names) == 23
    assert "male" in mf.names and "gender" not in mf.names and len(mf.names) == 24
    table = g.table()
    assert list(table.columns) == ["coef", "se", "z", "p", "stars"]
    with pytest.raises(ValueError):
        fit_logit(d.select(["intercept"]), "gender")
