import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rrglm import (
    InputError,
    RuleUsageError,
    ThresholdRule,
    apply_matrix,
    apply_scalar,
    berhu,
    hard,
    hard_ridge,
    parse_rule,
    penalty_matrix,
    penalty_scalar,
    quantile,
    ridge,
    soft,
    thin_svd,
)
from rrglm.oracles import matrix_approx_oracle
from rrglm.thresholding import apply_quantile

SCALAR_RULES = [soft(1.0), hard(1.0), ridge(1.0), hard_ridge(1.0, 0.5), berhu(1.0, 1.0)]
finite = st.floats(-50, 50, allow_nan=False)


@pytest.mark.parametrize(
    "rule, t, expected",
    [
        (soft(1.0), 1.5, 0.5),
        (ridge(1.0), 2.0, 1.0),
        (hard(1.0), 0.9, 0.0),
        (hard(1.0), 1.1, 1.1),
        (hard_ridge(1.0, 1.0), 2.0, 1.0),
        (berhu(1.0, 1.0), 3.0, 1.5),
        (berhu(1.0, 1.0), 1.5, 0.5),
        (berhu(1.0, 1.0), 0.7, 0.0),
    ],
)
def test_scalar_values(rule, t, expected):
    assert apply_scalar(rule, t) == pytest.approx(expected)


def test_discontinuity_conventions():
    # hard keeps only |t| > lam, hard-ridge keeps |t| >= lam
    assert apply_scalar(hard(1.0), 1.0) == 0.0
    assert apply_scalar(hard_ridge(1.0, 1.0), 1.0) == 0.5


def test_quantile_is_not_scalar():
    with pytest.raises(RuleUsageError):
        apply_scalar(quantile(1), 1.0)
    with pytest.raises(RuleUsageError):
        penalty_scalar(quantile(1), 1.0)


@pytest.mark.parametrize("rule", SCALAR_RULES, ids=lambda r: r.kind)
@given(t=finite, u=finite)
def test_scalar_rule_axioms(rule, t, u):
    assert apply_scalar(rule, -t) == -apply_scalar(rule, t)
    lo, hi = min(t, u), max(t, u)
    assert apply_scalar(rule, lo) <= apply_scalar(rule, hi)
    a = abs(t)
    assert 0.0 <= apply_scalar(rule, a) <= a


@pytest.mark.parametrize("rule", SCALAR_RULES, ids=lambda r: r.kind)
def test_monotone_on_grid(rule):
    t = np.linspace(-5, 5, 1000)
    assert np.all(np.diff(apply_scalar(rule, t)) >= 0)


def test_curvature_constants():
    assert [r.curvature for r in SCALAR_RULES + [quantile(1)]] == [0, 1, 0, 1, 0, 1]


@pytest.mark.parametrize(
    "a, r, eta, expected",
    [((3, 1, 2), 2, 0.0, (3, 0, 2)), ((3, 1, 2), 3, 1.0, (1.5, 0.5, 1)), ((1, 1), 1, 0.0, (1, 0)), ((-4, 1, 2), 1, 0.0, (-4, 0, 0))],
)
def test_apply_quantile(a, r, eta, expected):
    np.testing.assert_allclose(apply_quantile(np.array(a, float), r, eta), expected)


@pytest.mark.parametrize("r", [0, 4])
def test_apply_quantile_range(r):
    with pytest.raises(InputError):
        apply_quantile(np.ones(3), r)


def test_apply_matrix_examples():
    np.testing.assert_allclose(apply_matrix(hard(2.0), np.diag([3.0, 1.0])), np.diag([3.0, 0.0]), atol=1e-14)
    for rule in SCALAR_RULES + [quantile(2, 0.3)]:
        assert np.array_equal(apply_matrix(rule, np.zeros((3, 2))), np.zeros((3, 2)))
    rng = np.random.default_rng(0)
    u = rng.standard_normal(5)
    v = rng.standard_normal(4)
    u, v = u / np.linalg.norm(u), v / np.linalg.norm(v)
    out = apply_matrix(soft(0.5), 2.0 * np.outer(u, v))
    np.testing.assert_allclose(out, 1.5 * np.outer(u, v), atol=1e-12)
    np.testing.assert_allclose(thin_svd(out).s[0], 1.5)


@given(seed=st.integers(0, 10_000), r=st.integers(1, 4), eta=st.floats(0, 2))
@settings(max_examples=50)
def test_quantile_matrix_rank(seed, r, eta):
    B = np.random.default_rng(seed).standard_normal((5, 4))
    out = apply_matrix(quantile(r, eta), B)
    assert np.linalg.matrix_rank(out, tol=1e-10) <= r


@pytest.mark.parametrize("rule", SCALAR_RULES, ids=lambda r: r.kind)
def test_apply_matrix_never_raises_rank(rule):
    rng = np.random.default_rng(1)
    B = rng.standard_normal((6, 2)) @ rng.standard_normal((2, 4))
    assert np.linalg.matrix_rank(apply_matrix(rule, B), tol=1e-9) <= 2


@pytest.mark.parametrize(
    "rule, theta, expected",
    [
        (soft(1.0), 2.0, 2.0),
        (berhu(1.0, 1.0), 0.5, 0.5),
        (berhu(1.0, 1.0), 2.0, 2.5),
        (hard_ridge(1.0, 1.0), 0.0, 0.0),
        (hard_ridge(3.0, 2.0), 0.0, 0.0),
        (hard_ridge(1.0, 1.0), 1.0, 0.75),
        (ridge(2.0), 1.5, 2.25),
        (hard(2.0), 1.0, 1.5),
        (hard(2.0), 3.0, 2.0),
    ],
)
def test_penalty_values(rule, theta, expected):
    assert penalty_scalar(rule, theta) == pytest.approx(expected)


def test_penalty_matrix():
    assert penalty_matrix(soft(1.0), np.zeros((3, 2))) == 0.0
    assert penalty_matrix(soft(1.0), np.diag([2.0, 1.0])) == pytest.approx(3.0)
    B = np.random.default_rng(2).standard_normal((4, 3))
    lam = 1.2
    s = np.linalg.svd(B, compute_uv=False)
    big = s > lam
    expected = 0.5 * lam**2 * big.sum() + np.sum(-0.5 * s[~big] ** 2 + lam * s[~big])
    assert penalty_matrix(hard(lam), B) == pytest.approx(expected)
    with pytest.raises(RuleUsageError):
        penalty_matrix(quantile(1), B)


def test_hard_ridge_penalty_ignores_roundoff_rank():
    rng = np.random.default_rng(3)
    B = np.outer(rng.standard_normal(5), rng.standard_normal(4))
    rule = hard_ridge(1.0, 0.5)
    s1 = np.linalg.svd(B, compute_uv=False)[0]
    assert penalty_matrix(rule, B) == pytest.approx(0.25 * s1**2 + 1.0 / 3.0)


@pytest.mark.parametrize("rule", SCALAR_RULES, ids=lambda r: r.kind)
def test_matrix_rule_is_optimal(rule):
    """The matrix rule minimises ||Y - B||^2/2 + sum P(sigma_i(B))."""
    rng = np.random.default_rng(4)
    for _ in range(10):
        Y = 2 * rng.standard_normal((4, 3))
        B = apply_matrix(rule, Y)
        val = 0.5 * np.sum((Y - B) ** 2) + penalty_matrix(rule, B)
        opt = matrix_approx_oracle(Y, rule, 1e-4)
        # the grid optimum can only be worse than the exact one
        assert val <= opt.value + 1e-8
        assert opt.value - val <= 1e-4


def test_quantile_rule_is_optimal_under_rank_constraint():
    rng = np.random.default_rng(5)
    for r in (1, 2):
        for eta in (0.0, 0.4):
            Y = rng.standard_normal((5, 4))
            B = apply_matrix(quantile(r, eta), Y)
            val = 0.5 * np.sum((Y - B) ** 2) + 0.5 * eta * np.sum(B**2)
            U, s, Vt = np.linalg.svd(Y)
            # brute force over all truncations, each shrunk optimally by 1 + eta
            best = min(
                0.5 * np.sum((Y - (U[:, :k] * (s[:k] / (1 + eta))) @ Vt[:k]) ** 2)
                + 0.5 * eta * np.sum((s[:k] / (1 + eta)) ** 2)
                for k in range(r + 1)
            )
            assert val == pytest.approx(best, abs=1e-12)


@pytest.mark.parametrize(
    "text, expected",
    [
        ("soft:lambda=1.5", soft(1.5)),
        ("hard:lambda=2", hard(2.0)),
        ("ridge:lambda=0.5", ridge(0.5)),
        ("hardridge:lambda=1,eta=0.1", hard_ridge(1.0, 0.1)),
        ("berhu:lambda=1,M=2", berhu(1.0, 2.0)),
        ("quantile:r=3,eta=0.5", quantile(3, 0.5)),
        ("hard", hard(0.0)),
    ],
)
def test_parse_rule(text, expected):
    rule = parse_rule(text)
    assert rule == expected
    assert parse_rule(rule.spec()) == rule


@pytest.mark.parametrize("text", ["bogus:lambda=1", "soft:mu=1", "soft:lambda=x", "soft:lambda"])
def test_parse_rule_errors(text):
    with pytest.raises(InputError):
        parse_rule(text)


@pytest.mark.parametrize(
    "kwargs", [dict(kind="soft", lam=-1.0), dict(kind="berhu", lam=1.0, M=0.0), dict(kind="quantile", r=0), dict(kind="x")]
)
def test_rule_validation(kwargs):
    with pytest.raises(InputError):
        ThresholdRule(**kwargs)
