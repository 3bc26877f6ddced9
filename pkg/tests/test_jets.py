import numpy as np
import pytest

from surfstokes import jets
from surfstokes.jets import X1, X2, X3, Const, Jet3, JetDomainError, eval_field_jet


def test_exp_of_coordinate_seed_at_origin():
    j = eval_field_jet(jets.exp(X1), np.zeros(3))
    assert j.value == pytest.approx(1.0)
    assert np.allclose(j.grad, [1.0, 0.0, 0.0])
    expected_hess = np.zeros((3, 3))
    expected_hess[0, 0] = 1.0
    assert np.allclose(j.hess, expected_hess)
    expected_third = np.zeros((3, 3, 3))
    expected_third[0, 0, 0] = 1.0
    assert np.allclose(j.third, expected_third)


def test_bilinear_product_jet():
    j = eval_field_jet(X1 * X2, np.array([2.0, 3.0, 0.0]))
    assert j.value == pytest.approx(6.0)
    assert np.allclose(j.grad, [3.0, 2.0, 0.0])
    assert j.hess[0, 1] == pytest.approx(1.0)
    assert j.hess[1, 0] == pytest.approx(1.0)
    assert np.allclose(np.diag(j.hess), 0.0)
    assert np.allclose(j.third, 0.0)


def test_cos_at_pi():
    j = eval_field_jet(jets.cos(X2), np.array([0.0, np.pi, 0.0]))
    assert j.value == pytest.approx(-1.0)
    assert np.allclose(j.grad, 0.0, atol=1e-15)
    assert j.hess[1, 1] == pytest.approx(1.0)


def test_manufactured_stream_value_and_partial():
    phi = jets.exp(X1) * (jets.cos(X2) + X3)
    assert eval_field_jet(phi, np.zeros(3)).value == pytest.approx(1.0)
    # d/dx1 at (1, 0, 0) is e (cos 0 + 0) = e
    j = eval_field_jet(phi, np.array([1.0, 0.0, 0.0]))
    assert j.grad[0] == pytest.approx(np.e)


def test_triple_product_third_derivative():
    j = eval_field_jet(X1 * X2 * X3, np.ones(3))
    assert np.allclose(j.grad, 1.0)
    assert j.third[0, 1, 2] == pytest.approx(1.0)
    assert j.third[2, 0, 1] == pytest.approx(1.0)
    assert np.allclose(np.diagonal(j.hess), 0.0)


def test_random_cubic_polynomial_is_exact():
    rng = np.random.default_rng(3)
    # random polynomial of total degree <= 3 with closed-form derivatives
    exps = [(i, j, k) for i in range(4) for j in range(4 - i) for k in range(4 - i - j)]
    coefs = rng.standard_normal(len(exps))

    def analytic(x, da=(0, 0, 0)):
        total = 0.0
        for c, (i, j, k) in zip(coefs, exps):
            term = c
            for p, d, xv in zip((i, j, k), da, x):
                if p < d:
                    term = 0.0
                    break
                fac = 1.0
                for r in range(d):
                    fac *= p - r
                term *= fac * xv ** (p - d)
            total += term
        return total

    expr = Const(0.0)
    for c, (i, j, k) in zip(coefs, exps):
        term = Const(float(c))
        for _ in range(i):
            term = term * X1
        for _ in range(j):
            term = term * X2
        for _ in range(k):
            term = term * X3
        expr = expr + term

    for x in rng.uniform(-1.5, 1.5, size=(5, 3)):
        j = eval_field_jet(expr, x)
        assert j.value == pytest.approx(analytic(x), rel=1e-12, abs=1e-12)
        for a in range(3):
            da = [0, 0, 0]
            da[a] = 1
            assert j.grad[a] == pytest.approx(analytic(x, tuple(da)), rel=1e-12, abs=1e-12)
            for b in range(3):
                dab = [0, 0, 0]
                dab[a] += 1
                dab[b] += 1
                assert j.hess[a, b] == pytest.approx(
                    analytic(x, tuple(dab)), rel=1e-12, abs=1e-12
                )
                for c in range(3):
                    dabc = [0, 0, 0]
                    dabc[a] += 1
                    dabc[b] += 1
                    dabc[c] += 1
                    assert j.third[a, b, c] == pytest.approx(
                        analytic(x, tuple(dabc)), rel=1e-11, abs=1e-11
                    )


def test_transcendental_composition_matches_finite_differences():
    expr = jets.exp(X1 * X2) * jets.cos(X3) + jets.sqrt(Const(4.0) + X1 * X1)
    rng = np.random.default_rng(11)
    pts = rng.uniform(-0.8, 0.8, size=(100, 3))
    step = 1e-5

    def value(x):
        return float(expr(x))

    for x in pts:
        j = eval_field_jet(expr, x)
        for a in range(3):
            e = np.zeros(3)
            e[a] = step
            fd = (value(x + e) - value(x - e)) / (2 * step)
            assert j.grad[a] == pytest.approx(fd, rel=1e-8, abs=1e-8)


def test_symmetry_is_preserved_exactly():
    rng = np.random.default_rng(5)
    x = rng.uniform(-1, 1, size=(7, 3))
    expr = jets.exp(X1) * (jets.cos(X2) + X3) * jets.sqrt(Const(2.0) + X2)
    j = expr.jet(Jet3.coordinates(x))
    assert np.array_equal(j.hess, np.swapaxes(j.hess, -1, -2))
    for perm in ((0, 2, 1), (1, 0, 2), (2, 1, 0)):
        permuted = np.transpose(j.third, (0,) + tuple(1 + p for p in perm))
        assert np.array_equal(j.third, permuted)


def test_domain_errors():
    with pytest.raises(JetDomainError):
        eval_field_jet(jets.sqrt(X1), np.zeros(3))
    with pytest.raises(JetDomainError):
        eval_field_jet(jets.reciprocal(X2), np.array([1.0, 0.0, 0.0]))
    with pytest.raises(JetDomainError):
        eval_field_jet(X1 / X2, np.array([1.0, 0.0, 2.0]))


def test_division_matches_product_with_reciprocal():
    expr = (X1 + Const(2.0)) / (X2 + Const(3.0))
    j = eval_field_jet(expr, np.array([1.0, 1.0, 0.0]))
    assert j.value == pytest.approx(0.75)
    assert j.grad[0] == pytest.approx(0.25)
    assert j.grad[1] == pytest.approx(-0.1875)


def test_derivative_extraction_shifts_orders():
    phi = jets.exp(X1) * (jets.cos(X2) + X3)
    x = np.array([0.3, -0.2, 0.9])
    j = eval_field_jet(phi, x)
    d0 = j.derivative(0)
    assert d0.value == pytest.approx(j.grad[0])
    assert np.allclose(d0.grad, j.hess[0])
    assert np.allclose(d0.hess, j.third[0])
