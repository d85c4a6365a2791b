"""Closed algebra of functions ``P(v) * exp(-v^T M v + b^T v + c)``.

Fock-state Wigner functions, Gaussian channels and classical displacement
distributions all have this form, and so do their products, linear changes
of variables, partial evaluations and marginals.  Integrals are done exactly
by Gaussian-moment reduction, one variable at a time.

Polynomials are sparse dicts mapping exponent tuples (one entry per label)
to float coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .gaussian import LinearMap, NumericalError, ValidationError

PRUNE_RTOL = 1e-14

Poly = dict  # dict[tuple[int, ...], float]


# -- sparse polynomial helpers -------------------------------------------------

def prune(p: Poly, rtol: float = PRUNE_RTOL, quad: np.ndarray | None = None) -> Poly:
    """Drop zero and negligible terms.

    Without ``quad`` a term is negligible below ``rtol * max|c|``.  With the
    quadratic form, coefficients are first weighted by the RMS moment of
    their monomial, which is what the term contributes once integrated.
    """
    if not p:
        return {}
    if quad is None:
        cut = rtol * max(abs(c) for c in p.values())
        return {e: c for e, c in p.items() if abs(c) > cut}
    sizes = _log_moment_sizes(p, quad)
    cut = max(sizes.values()) + math.log(rtol) if rtol > 0 else -math.inf
    return {e: c for e, c in p.items() if c != 0.0 and sizes[e] > cut}


def poly_add(p: Poly, q: Poly, scale: float = 1.0) -> Poly:
    out = dict(p)
    for e, c in q.items():
        out[e] = out.get(e, 0.0) + scale * c
    return out


def poly_mul(p: Poly, q: Poly) -> Poly:
    out: Poly = {}
    for e1, c1 in p.items():
        for e2, c2 in q.items():
            e = tuple(a + b for a, b in zip(e1, e2))
            out[e] = out.get(e, 0.0) + c1 * c2
    return out


def affine_poly(coeffs: Sequence[float], constant: float = 0.0, tol: float = 0.0) -> Poly:
    """``constant + sum_i coeffs[i] * v_i`` as a sparse polynomial."""
    d = len(coeffs)
    p: Poly = {}
    if constant:
        p[(0,) * d] = float(constant)
    for i, c in enumerate(coeffs):
        if abs(c) > tol:
            e = [0] * d
            e[i] = 1
            p[tuple(e)] = float(c)
    return p or {(0,) * d: 0.0}


class _Powers:
    """Cached integer powers of one polynomial."""

    def __init__(self, base: Poly, d: int):
        self._cache = [{(0,) * d: 1.0}, base]

    def __getitem__(self, n: int) -> Poly:
        while len(self._cache) <= n:
            self._cache.append(poly_mul(self._cache[-1], self._cache[1]))
        return self._cache[n]


def degree(p: Poly) -> int:
    return max((sum(e) for e in p), default=0)


def _log_moment_sizes(p: Poly, quad: np.ndarray) -> dict:
    """``log(|c| * sqrt(E[v^(2e)]))`` per term, moments taken under the
    marginal width ``1/(2 quad_ii)`` of each confining direction."""
    diag = np.diag(quad)
    var = np.where(diag > 0, 0.5 / np.where(diag > 0, diag, 1.0), 0.5)
    out = {}
    for e, c in p.items():
        s = math.log(abs(c)) if c else -math.inf
        for k, v in zip(e, var):
            if k:
                # log sqrt((2k-1)!! v^k)
                s += 0.5 * (math.lgamma(2 * k + 1) - k * math.log(2) - math.lgamma(k + 1) + k * math.log(v))
        out[e] = s
    return out


# -- the function class ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PolyGaussWigner:
    """``poly(v) * exp(-v^T quad v + lin^T v + const)`` over ``labels``."""

    labels: tuple[str, ...]
    poly: Poly
    quad: np.ndarray
    lin: np.ndarray
    const: float = 0.0

    def __post_init__(self):
        labels = tuple(self.labels)
        d = len(labels)
        if len(set(labels)) != d:
            raise ValidationError(f"duplicate labels {labels}")
        quad = np.asarray(self.quad, dtype=float).reshape(d, d)
        lin = np.asarray(self.lin, dtype=float).reshape(d)
        if np.max(np.abs(quad - quad.T), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(quad), initial=0.0)):
            raise ValidationError("quadratic form must be symmetric")
        quad = 0.5 * (quad + quad.T)
        poly = {}
        for e, c in self.poly.items():
            e = tuple(int(x) for x in e)
            if len(e) != d or min(e, default=0) < 0:
                raise ValidationError(f"bad exponent {e} for {d} variables")
            poly[e] = poly.get(e, 0.0) + float(c)
        if not all(math.isfinite(c) for c in poly.values()) or not math.isfinite(self.const):
            raise NumericalError("non-finite coefficients")
        if not (np.all(np.isfinite(quad)) and np.all(np.isfinite(lin))):
            raise NumericalError("non-finite exponent")
        poly = prune(poly, quad=quad)
        quad.setflags(write=False)
        lin.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "poly", poly)
        object.__setattr__(self, "quad", quad)
        object.__setattr__(self, "lin", lin)
        object.__setattr__(self, "const", float(self.const))

    @classmethod
    def constant(cls, value: float) -> "PolyGaussWigner":
        if value == 0:
            return cls((), {}, np.zeros((0, 0)), np.zeros(0), 0.0)
        return cls((), {(): math.copysign(1.0, value)}, np.zeros((0, 0)), np.zeros(0), math.log(abs(value)))

    @property
    def dim(self) -> int:
        return len(self.labels)

    @property
    def degree(self) -> int:
        return degree(self.poly)

    def scalar(self) -> float:
        """Value of a function with no variables left."""
        if self.labels:
            raise ValidationError(f"variables {self.labels} remain")
        return self.poly.get((), 0.0) * math.exp(self.const)

    def is_integrable(self) -> bool:
        return self.dim == 0 or bool(np.linalg.eigvalsh(self.quad)[0] > 0)

    def __call__(self, *values) -> np.ndarray:
        """Evaluate on broadcastable arrays, one per label."""
        if len(values) != self.dim:
            raise ValidationError(f"expected {self.dim} coordinates, got {len(values)}")
        vs = np.broadcast_arrays(*[np.asarray(v, dtype=float) for v in values])
        if not vs:
            return np.asarray(self.scalar())
        expo = np.full(vs[0].shape, self.const)
        for i in range(self.dim):
            expo += self.lin[i] * vs[i]
            expo -= self.quad[i, i] * vs[i] ** 2
            for j in range(i + 1, self.dim):
                expo -= 2.0 * self.quad[i, j] * vs[i] * vs[j]
        total = np.zeros(vs[0].shape)
        powers = [{0: np.ones(vs[0].shape)} for _ in vs]
        for e, c in self.poly.items():
            term = np.full(vs[0].shape, c)
            for i, k in enumerate(e):
                if k:
                    if k not in powers[i]:
                        powers[i][k] = vs[i] ** k
                    term = term * powers[i][k]
            total += term
        return total * np.exp(expo)


def gaussian(labels: Sequence[str], cov, mean=None) -> PolyGaussWigner:
    """Normalised Gaussian ``exp(-(v-m)^T cov^-1 (v-m)) / (pi^(d/2) sqrt(det cov))``.

    With the vacuum-is-identity convention this is the Wigner function of a
    Gaussian state, and with ``cov = v_c * I`` the density of classical
    displacements of variance ``v_c / 2``.
    """
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    d = len(labels)
    if cov.shape != (d, d):
        raise ValidationError(f"covariance shape {cov.shape} does not match {d} labels")
    m = np.zeros(d) if mean is None else np.asarray(mean, dtype=float).reshape(d)
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        raise ValidationError("covariance must be positive definite")
    inv = np.linalg.inv(cov)
    inv = 0.5 * (inv + inv.T)
    const = -float(m @ inv @ m) - 0.5 * d * math.log(math.pi) - 0.5 * logdet
    return PolyGaussWigner(tuple(labels), {(0,) * d: 1.0}, inv, 2.0 * inv @ m, const)


def fock_wigner(N: int, labels: Sequence[str] = ("x", "p")) -> PolyGaussWigner:
    """Wigner function ``((-1)^N / pi) L_N(2(x^2 + p^2)) exp(-x^2 - p^2)`` of ``|N>``."""
    if int(N) != N or N < 0:
        raise ValidationError(f"Fock number must be a non-negative integer, got {N}")
    N = int(N)
    if len(labels) != 2:
        raise ValidationError("a single-mode Wigner function needs two labels")
    poly: Poly = {}
    sign = -1.0 if N % 2 else 1.0
    for j in range(N + 1):
        # L_N(t) = sum_j C(N,j) (-t)^j / j!  with  t^j = 2^j sum_i C(j,i) x^2i p^2(j-i)
        cj = sign * math.comb(N, j) * (-2.0) ** j / math.factorial(j)
        for i in range(j + 1):
            e = (2 * i, 2 * (j - i))
            poly[e] = poly.get(e, 0.0) + cj * math.comb(j, i)
    return PolyGaussWigner(tuple(labels), poly, np.eye(2), np.zeros(2), -math.log(math.pi))


def _embed(W: PolyGaussWigner, labels: tuple[str, ...]):
    idx = [labels.index(n) for n in W.labels]
    d = len(labels)
    quad = np.zeros((d, d))
    quad[np.ix_(idx, idx)] = W.quad
    lin = np.zeros(d)
    lin[idx] = W.lin
    poly = {}
    for e, c in W.poly.items():
        full = [0] * d
        for i, k in zip(idx, e):
            full[i] = k
        poly[tuple(full)] = c
    return poly, quad, lin


def product(W1: PolyGaussWigner, W2: PolyGaussWigner) -> PolyGaussWigner:
    """Pointwise product; shared labels are identified, new ones appended."""
    labels = W1.labels + tuple(n for n in W2.labels if n not in W1.labels)
    p1, q1, l1 = _embed(W1, labels)
    p2, q2, l2 = _embed(W2, labels)
    return PolyGaussWigner(labels, poly_mul(p1, p2), q1 + q2, l1 + l2, W1.const + W2.const)


def substitute_linear(
    W: PolyGaussWigner, S, labels: Sequence[str] | None = None
) -> PolyGaussWigner:
    """Push ``W`` forward through the variable change ``v' = S v``.

    Returns ``W'(v') = W(S^-1 v') |det S^-1|``.  Output labels come from
    ``labels``, else from a relabelling ``LinearMap``, else stay the same.
    """
    if isinstance(S, LinearMap):
        if labels is None and S.labels is not None:
            labels = tuple(lab.name for lab in S.labels)
        S = S.matrix
    S = np.asarray(S, dtype=float)
    d = W.dim
    if S.shape != (d, d):
        raise ValidationError(f"map of shape {S.shape} does not act on {d} variables")
    sign, logdet = np.linalg.slogdet(S)
    if sign == 0 or not math.isfinite(logdet) or abs(logdet) > 700:
        raise ValidationError("substitution map is singular")
    A = np.linalg.inv(S)
    out_labels = tuple(labels) if labels is not None else W.labels

    rows = [_Powers(affine_poly(A[i], tol=1e-15 * np.max(np.abs(A[i]))), d) for i in range(d)]
    poly: Poly = {}
    for e, c in W.poly.items():
        term: Poly = {(0,) * d: c}
        for i, k in enumerate(e):
            if k:
                term = poly_mul(term, rows[i][k])
        poly = poly_add(poly, term)
    quad = A.T @ W.quad @ A
    return PolyGaussWigner(out_labels, poly, quad, A.T @ W.lin, W.const - logdet)


def _gaussian_moments(m_max: int, mu: Poly, var: float, d: int) -> list[Poly]:
    """``E[Y^m]`` for ``Y ~ N(mu, var)`` with affine ``mu``, as polynomials."""
    mu_pow = _Powers(mu, d)
    out = []
    for m in range(m_max + 1):
        acc: Poly = {}
        for j in range(0, m + 1, 2):
            # (j-1)!! var^(j/2) C(m, j)
            w = math.comb(m, j) * _double_factorial(j - 1) * var ** (j // 2)
            acc = poly_add(acc, mu_pow[m - j], w)
        out.append(acc)
    return out


def _double_factorial(n: int) -> int:
    return 1 if n <= 0 else n * _double_factorial(n - 2)


def _integrate_one(W: PolyGaussWigner, name: str) -> PolyGaussWigner:
    j = W.labels.index(name)
    rest = [i for i in range(W.dim) if i != j]
    a = W.quad[j, j]
    if not a > 0:
        raise ValidationError(f"function is not integrable along {name!r} (a={a})")
    d = len(rest)
    ell = -2.0 * W.quad[j, rest]
    b = W.lin[j]
    # exponent -a y^2 + beta(z) y, with beta(z) = b + ell.z
    mu = affine_poly(ell / (2 * a), b / (2 * a))
    var = 1.0 / (2 * a)

    by_power: dict[int, Poly] = {}
    for e, c in W.poly.items():
        sub = tuple(e[i] for i in rest)
        p = by_power.setdefault(e[j], {})
        p[sub] = p.get(sub, 0.0) + c
    moments = _gaussian_moments(max(by_power, default=0), mu, var, d)
    poly: Poly = {}
    for m, pm in by_power.items():
        poly = poly_add(poly, poly_mul(pm, moments[m]))

    quad = W.quad[np.ix_(rest, rest)] - np.outer(ell, ell) / (4 * a)
    lin = W.lin[rest] + b * ell / (2 * a)
    const = W.const + b * b / (4 * a) + 0.5 * math.log(math.pi / a)
    return PolyGaussWigner(tuple(W.labels[i] for i in rest), poly, quad, lin, const)


def integrate_out(
    W: PolyGaussWigner, names: Iterable[str] | None = None, order: Sequence[str] | None = None
) -> PolyGaussWigner:
    """Integrate ``W`` over ``names`` (all variables by default).

    Variables go in the given ``order`` or, by default, largest diagonal of
    the quadratic form first.
    """
    todo = list(W.labels if names is None else names)
    for n in todo:
        if n not in W.labels:
            raise ValidationError(f"unknown variable {n!r}")
    if order is not None:
        if sorted(order) != sorted(todo):
            raise ValidationError("order must be a permutation of the integrated variables")
        for n in order:
            W = _integrate_one(W, n)
        return W
    while todo:
        diag = {n: W.quad[W.labels.index(n), W.labels.index(n)] for n in todo}
        n = max(todo, key=lambda x: diag[x])
        W = _integrate_one(W, n)
        todo.remove(n)
    return W


def total(W: PolyGaussWigner) -> float:
    """Integral of ``W`` over all variables."""
    return integrate_out(W).scalar()


def evaluate_at(W: PolyGaussWigner, label: str, value: float) -> PolyGaussWigner:
    """Fix one variable; the result keeps its weight (not renormalised)."""
    if label not in W.labels:
        raise ValidationError(f"unknown variable {label!r}")
    j = W.labels.index(label)
    rest = [i for i in range(W.dim) if i != j]
    v = float(value)
    poly: Poly = {}
    for e, c in W.poly.items():
        sub = tuple(e[i] for i in rest)
        poly[sub] = poly.get(sub, 0.0) + c * v ** e[j]
    quad = W.quad[np.ix_(rest, rest)]
    lin = W.lin[rest] - 2.0 * v * W.quad[rest, j]
    const = W.const - W.quad[j, j] * v * v + W.lin[j] * v
    return PolyGaussWigner(tuple(W.labels[i] for i in rest), poly, quad, lin, const)


def overlap(W1: PolyGaussWigner, W2: PolyGaussWigner) -> float:
    """``2 pi int W1 W2`` for two single-mode Wigner functions."""
    if W1.dim != 2 or set(W1.labels) != set(W2.labels):
        raise ValidationError("overlap needs two single-mode functions of the same variables")
    return 2.0 * math.pi * total(product(W1, W2))


def rename(W: PolyGaussWigner, mapping: Mapping[str, str]) -> PolyGaussWigner:
    return PolyGaussWigner(
        tuple(mapping.get(n, n) for n in W.labels), W.poly, W.quad, W.lin, W.const
    )
