import math

import numpy as np
import pytest
from scipy import integrate

from cvfid import polygauss as pg
from cvfid.gaussian import NumericalError, ValidationError, linear_map, mode

import oracles


def random_pg(rng, labels, max_deg=3, n_terms=4):
    d = len(labels)
    a = rng.normal(size=(d, d))
    quad = a @ a.T / d + 0.5 * np.eye(d)
    poly = {}
    for _ in range(n_terms):
        e = tuple(int(v) for v in rng.integers(0, max_deg + 1, size=d))
        poly[e] = float(rng.normal())
    return pg.PolyGaussWigner(tuple(labels), poly, quad, rng.normal(size=d) * 0.5, float(rng.normal() * 0.1))


# -- arithmetic ------------------------------------------------------------------

def test_poly_mul_and_add():
    p = {(1, 0): 2.0, (0, 0): 1.0}
    q = {(0, 1): 3.0, (0, 0): -1.0}
    assert pg.poly_mul(p, q) == {(1, 1): 6.0, (1, 0): -2.0, (0, 1): 3.0, (0, 0): -1.0}
    assert not any(pg.poly_add(p, p, -1.0).values())


def test_prune_drops_negligible_terms_only():
    quad = np.eye(2)
    p = {(0, 0): 1.0, (2, 0): 1e-20, (0, 2): 0.5}
    out = pg.prune(p, quad=quad)
    assert (2, 0) not in out and out[(0, 2)] == 0.5


def test_validation():
    with pytest.raises(ValidationError):
        pg.PolyGaussWigner(("x", "x"), {(0, 0): 1.0}, np.eye(2), np.zeros(2))
    with pytest.raises(ValidationError):
        pg.PolyGaussWigner(("x",), {(0, 0): 1.0}, np.eye(1), np.zeros(1))
    with pytest.raises(ValidationError):
        pg.PolyGaussWigner(("x", "p"), {(0, 0): 1.0}, [[1, 0.5], [0, 1]], np.zeros(2))
    with pytest.raises(NumericalError):
        pg.PolyGaussWigner(("x",), {(0,): math.inf}, np.eye(1), np.zeros(1))


def test_constant_and_scalar():
    assert pg.PolyGaussWigner.constant(-2.5).scalar() == pytest.approx(-2.5)
    assert pg.PolyGaussWigner.constant(0.0).scalar() == 0.0
    with pytest.raises(ValidationError):
        pg.fock_wigner(1).scalar()


# -- Fock Wigner functions ---------------------------------------------------------

@pytest.mark.parametrize("N", [0, 1, 2, 5, 9])
def test_fock_wigner_matches_laguerre(N):
    rng = np.random.default_rng(N)
    x, p = rng.normal(size=(2, 50)) * 1.5
    W = pg.fock_wigner(N)
    assert np.allclose(W(x, p), oracles.fock_wigner(N, x, p), atol=1e-12)


@pytest.mark.parametrize("N", range(6))
def test_fock_wigner_normalised(N):
    assert pg.total(pg.fock_wigner(N)) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("N,M", [(0, 0), (1, 1), (3, 3), (0, 1), (1, 2), (2, 5)])
def test_fock_states_orthonormal(N, M):
    got = pg.overlap(pg.fock_wigner(N), pg.fock_wigner(M))
    assert got == pytest.approx(1.0 if N == M else 0.0, abs=1e-11)


def test_fock_wigner_rejects_bad_n():
    with pytest.raises(ValidationError):
        pg.fock_wigner(-1)
    with pytest.raises(ValidationError):
        pg.fock_wigner(1.5)


# -- Gaussians ---------------------------------------------------------------------

def test_gaussian_normalised_and_mean():
    cov = np.array([[2.0, 0.3], [0.3, 0.7]])
    W = pg.gaussian(("a", "b"), cov, [0.4, -1.0])
    assert pg.total(W) == pytest.approx(1.0)
    xW = pg.product(W, pg.PolyGaussWigner(("a",), {(1,): 1.0}, np.zeros((1, 1)), np.zeros(1)))
    assert pg.total(xW) == pytest.approx(0.4)


def test_gaussian_second_moment_is_half_cov():
    # density exp(-v^T cov^-1 v): Var = cov / 2
    cov = np.array([[2.0, 0.3], [0.3, 0.7]])
    W = pg.gaussian(("a", "b"), cov)
    ab = pg.product(W, pg.PolyGaussWigner(("a", "b"), {(1, 1): 1.0}, np.zeros((2, 2)), np.zeros(2)))
    assert pg.total(ab) == pytest.approx(0.15)


@pytest.mark.parametrize("m", range(9))
def test_one_dimensional_moments(m):
    # int x^m exp(-x^2) dx = Gamma((m+1)/2) for even m, zero for odd
    W = pg.PolyGaussWigner(("x",), {(m,): 1.0}, np.eye(1), np.zeros(1))
    expected = math.gamma((m + 1) / 2) if m % 2 == 0 else 0.0
    assert pg.total(W) == pytest.approx(expected, abs=1e-13)


def test_overlap_gaussian_with_vacuum():
    cov = np.diag([2.0, 0.5])
    got = pg.overlap(pg.fock_wigner(0, ("x", "p")), pg.gaussian(("x", "p"), cov))
    assert got == pytest.approx(2 / math.sqrt(3.0 * 1.5))


# -- evaluation and integration against quadrature -------------------------------

def test_call_matches_definition():
    rng = np.random.default_rng(11)
    W = random_pg(rng, ("a", "b", "c"))
    v = rng.normal(size=3)
    poly = sum(c * np.prod(v ** np.array(e)) for e, c in W.poly.items())
    expected = poly * math.exp(-v @ W.quad @ v + W.lin @ v + W.const)
    assert W(*v) == pytest.approx(expected)


def test_integrate_out_matches_quadrature():
    rng = np.random.default_rng(12)
    W = random_pg(rng, ("a", "b"))
    marg = pg.integrate_out(W, ["a"])
    for b in (-0.7, 0.0, 1.3):
        ref, _ = integrate.quad(lambda a: float(W(a, b)), -np.inf, np.inf, epsabs=1e-13)
        assert marg(b) == pytest.approx(ref, abs=1e-10)


def test_total_matches_2d_quadrature():
    rng = np.random.default_rng(13)
    W = random_pg(rng, ("a", "b"), max_deg=4)
    ref, _ = integrate.dblquad(lambda b, a: float(W(a, b)), -12, 12, -12, 12, epsabs=1e-12)
    assert pg.total(W) == pytest.approx(ref, abs=1e-9)


def test_integration_order_does_not_matter():
    rng = np.random.default_rng(14)
    W = random_pg(rng, ("a", "b", "c", "d"))
    t1 = pg.integrate_out(W, order=["a", "b", "c", "d"]).scalar()
    t2 = pg.integrate_out(W, order=["d", "b", "a", "c"]).scalar()
    assert t1 == pytest.approx(t2, rel=1e-11)


def test_non_integrable_direction():
    W = pg.PolyGaussWigner(("a", "b"), {(0, 0): 1.0}, np.diag([1.0, 0.0]), np.zeros(2))
    assert not W.is_integrable()
    with pytest.raises(ValidationError):
        pg.integrate_out(W, ["b"])


def test_integrate_unknown_or_bad_order():
    W = pg.fock_wigner(1)
    with pytest.raises(ValidationError):
        pg.integrate_out(W, ["q"])
    with pytest.raises(ValidationError):
        pg.integrate_out(W, ["x"], order=["p"])


def test_evaluate_at():
    rng = np.random.default_rng(15)
    W = random_pg(rng, ("a", "b"))
    V = pg.evaluate_at(W, "a", 0.4)
    assert V(-0.2) == pytest.approx(W(0.4, -0.2))


# -- substitution ------------------------------------------------------------------

def test_substitution_pushes_forward_density():
    rng = np.random.default_rng(16)
    W = random_pg(rng, ("a", "b"))
    S = rng.normal(size=(2, 2)) + 2 * np.eye(2)
    W2 = pg.substitute_linear(W, S)
    v = np.array([0.3, -0.8])
    expected = W(*np.linalg.solve(S, v)) / abs(np.linalg.det(S))
    assert W2(*v) == pytest.approx(expected)
    assert pg.total(W2) == pytest.approx(pg.total(W))


def test_substitution_with_relabelling_map():
    labels = mode("1") + mode("2")
    y = mode("y")
    S = linear_map(labels, {}, rename={"x_2": y[0], "p_2": y[1]})
    W = pg.substitute_linear(pg.product(pg.fock_wigner(1, ("x_1", "p_1")), pg.fock_wigner(0, ("x_2", "p_2"))), S)
    assert W.labels == ("x_1", "p_1", "x_y", "p_y")


def test_singular_substitution_rejected():
    with pytest.raises(ValidationError):
        pg.substitute_linear(pg.fock_wigner(0), np.zeros((2, 2)))


def test_rotation_leaves_fock_wigner_invariant():
    th = 0.73
    R = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    W = pg.fock_wigner(3)
    W2 = pg.substitute_linear(W, R)
    x, p = np.array([0.2, 1.1, -0.6]), np.array([0.5, -0.3, 0.9])
    assert np.allclose(W2(x, p), W(x, p), atol=1e-12)


def test_product_identifies_shared_labels():
    W = pg.product(pg.gaussian(("a", "b"), np.eye(2)), pg.gaussian(("b", "c"), np.eye(2)))
    assert W.labels == ("a", "b", "c")
    assert W(0.1, 0.2, 0.3) == pytest.approx(
        pg.gaussian(("a", "b"), np.eye(2))(0.1, 0.2) * pg.gaussian(("b", "c"), np.eye(2))(0.2, 0.3)
    )


def test_rename():
    W = pg.rename(pg.fock_wigner(2), {"x": "q"})
    assert W.labels == ("q", "p")
