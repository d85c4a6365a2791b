"""Teleportation of Fock states through the EPR channel, in the poly-Gauss picture."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import binom

from . import polygauss as pg
from .gaussian import CLASSICAL, ValidationError, mode
from .protocols import (
    FidelityResult,
    beam_splitter_23,
    displacement_map,
    epr_covariance,
    optimize_gain,
    teleport_feedback_map,
    validate_channel,
)

# Polynomial degrees grow as 2N and the alternating Laguerre coefficients
# cancel; up to this order unit-gain fidelities stay within ~1e-10 for EPR
# variances down to 0.05.  Ensemble sums switch to the binomial form above it.
POLYGAUSS_MAX_N = 8

MEASURED_BLOCK = ("x_+", "p_+", "x_-", "p_-")

_QUANTUM = mode("1") + mode("2") + mode("3")
_HYBRID = _QUANTUM + mode("cl", CLASSICAL)


def _teleport(W: pg.PolyGaussWigner, labels, g: float) -> pg.PolyGaussWigner:
    """Beam splitter, feedback and averaging over all outcomes of modes 2, 3."""
    bs = beam_splitter_23(labels)
    W = pg.substitute_linear(W, bs)
    W = pg.substitute_linear(W, teleport_feedback_map(bs.labels, g))
    return pg.integrate_out(W, MEASURED_BLOCK)


def channel_wigner(n: float, k: float) -> pg.PolyGaussWigner:
    state = epr_covariance(n, k)
    return pg.gaussian(state.names, state.cov)


def teleported_fock(N: int, n: float, k: float, g: float) -> pg.PolyGaussWigner:
    """Output Wigner function of mode 1 for input ``|N>`` in mode 3."""
    W = pg.product(channel_wigner(n, k), pg.fock_wigner(N, ("x_3", "p_3")))
    return _teleport(W, _QUANTUM, g)


def fock_teleport_fidelity(N: int, n: float, k: float, g: float) -> FidelityResult:
    if not (math.isfinite(g) and g >= 0):
        raise ValidationError(f"gain must be finite and >= 0, got {g}")
    out = teleported_fock(N, n, k, g)
    value = pg.overlap(pg.fock_wigner(N, ("x_1", "p_1")), out)
    return FidelityResult(value, "polygauss", {"N": N, "n": n, "k": k}, gain=g)


def displaced_fock_integrand(N: int, n: float, k: float, g: float, v_c: float) -> pg.PolyGaussWigner:
    """Reference ``W_N(x_1, p_1)`` times the verified output, before the final
    integration over ``(x_1, p_1, x_cl, p_cl)``."""
    W = pg.product(channel_wigner(n, k), pg.fock_wigner(N, ("x_3", "p_3")))
    W = pg.product(W, pg.gaussian(("x_cl", "p_cl"), v_c * np.eye(2)))
    W = pg.substitute_linear(W, displacement_map(_HYBRID, "3"))
    W = _teleport(W, _HYBRID, g)
    remaining = mode("1") + mode("cl", CLASSICAL)
    assert W.labels == tuple(lab.name for lab in remaining), W.labels
    W = pg.substitute_linear(W, displacement_map(remaining, "1", -1.0))
    return pg.product(pg.fock_wigner(N, ("x_1", "p_1")), W)


def displaced_fock_teleport_fidelity(
    N: int, n: float, k: float, g: float, v_c: float
) -> FidelityResult:
    """Average fidelity for ``|N>`` displaced by classical variables of spread ``v_c``."""
    if not v_c >= 0:
        raise ValidationError(f"v_c must be >= 0, got {v_c}")
    if v_c == 0:
        res = fock_teleport_fidelity(N, n, k, g)
        return FidelityResult(res.value, "polygauss", {**res.params, "v_c": 0.0}, gain=g)
    if not (math.isfinite(g) and g >= 0):
        raise ValidationError(f"gain must be finite and >= 0, got {g}")
    value = 2.0 * math.pi * pg.total(displaced_fock_integrand(N, n, k, g, v_c))
    return FidelityResult(value, "polygauss", {"N": N, "n": n, "k": k, "v_c": v_c}, gain=g)


def optimal_fock_gain(N: int, n: float, k: float, bracket=(0.0, 2.0)) -> tuple[float, float]:
    """Gain maximising the Fock teleportation fidelity, found numerically."""
    validate_channel(n, k)
    return optimize_gain(lambda g: fock_teleport_fidelity(N, n, k, g).value, bracket)


def single_photon_unit_gain_fidelity(delta: float) -> float:
    """Unit-gain fidelity for ``|1>`` through a channel of EPR variance ``delta``."""
    return (1 + delta * delta) / (1 + delta) ** 3


# -- exponential ensemble of Fock states -----------------------------------------

@dataclass(frozen=True)
class FockEnsembleParams:
    """Geometric distribution ``p_N = (1 - lam) lam^N`` truncated at ``n_max``."""

    lam: float
    delta: float
    n_max: int = 60

    def __post_init__(self):
        if not 0 <= self.lam < 1:
            raise ValidationError(f"lambda must lie in [0, 1), got {self.lam}")
        if not self.delta > 0:
            raise ValidationError(f"EPR variance must be > 0, got {self.delta}")
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValidationError(f"n_max must be a positive integer, got {self.n_max}")

    @classmethod
    def from_mean_photons(cls, nbar: float, delta: float, n_max: int = 60):
        return cls(math.exp(-1.0 / nbar) if nbar > 0 else 0.0, delta, n_max)

    @property
    def nbar(self) -> float:
        return math.inf if self.lam == 0 else -1.0 / math.log(self.lam) if self.lam > 0 else 0.0

    @property
    def tail_bound(self) -> float:
        """Upper bound on the omitted weight ``sum_{N > n_max} (1-lam) lam^N``."""
        return self.lam ** (self.n_max + 1)


def pure_channel(delta: float) -> tuple[float, float]:
    """``(n, k)`` of the two-mode squeezed state with EPR variance ``delta``."""
    return 0.5 * (delta + 1.0 / delta), 0.5 * (1.0 / delta - delta)


def unit_gain_fock_fidelity(N: int, delta: float) -> float:
    """Unit-gain fidelity of ``|N>`` from the additive-noise picture.

    At unit gain the channel adds Gaussian noise with mean photon number
    ``delta``; the overlap reduces to ``sum_j Bin(j; N, a)^2 / (1 + delta)``
    with ``a = delta / (1 + delta)``, a sum of positive terms that stays
    accurate for large ``N``.
    """
    a = delta / (1.0 + delta)
    pmf = binom.pmf(np.arange(N + 1), N, a)
    return float(np.sum(pmf * pmf) / (1.0 + delta))


def ensemble_fidelity_closed_form(lam: float, delta: float) -> float:
    return (1 - lam) / math.sqrt(
        (1 + delta) ** 2 - 2 * lam * (1 + delta * delta) + lam * lam * (1 - delta) ** 2
    )


@dataclass(frozen=True)
class EnsembleResult:
    fidelity: FidelityResult
    closed_form: float
    tail_bound: float
    terms: tuple[float, ...]
    polygauss_terms: int


def fock_ensemble_fidelity(
    params: FockEnsembleParams,
    n: float | None = None,
    k: float | None = None,
    tol: float | None = None,
    polygauss_max_n: int = POLYGAUSS_MAX_N,
) -> EnsembleResult:
    """Truncated average ``sum_{N <= n_max} (1-lam) lam^N F_N`` at unit gain.

    ``F_N`` comes from the poly-Gauss pipeline for ``N <= polygauss_max_n``
    and from :func:`unit_gain_fock_fidelity` above that.  The channel
    defaults to the pure one with the requested EPR variance.
    """
    if n is None and k is None:
        n, k = pure_channel(params.delta)
    elif n is None or k is None:
        raise ValidationError("give both n and k, or neither")
    validate_channel(n, k)
    if abs((n - k) - params.delta) > 1e-9 * max(1.0, params.delta):
        raise ValidationError(f"n - k = {n - k} does not match delta = {params.delta}")
    if tol is not None and params.tail_bound > tol:
        raise ValidationError(
            f"truncation tail {params.tail_bound:.3g} exceeds tolerance {tol:.3g}; raise n_max"
        )
    terms = []
    for N in range(params.n_max + 1):
        if N <= polygauss_max_n:
            terms.append(fock_teleport_fidelity(N, n, k, 1.0).value)
        else:
            terms.append(unit_gain_fock_fidelity(N, params.delta))
    lam = params.lam
    weights = (1 - lam) * lam ** np.arange(params.n_max + 1)
    value = float(np.dot(weights, terms))
    fid = FidelityResult(
        value,
        "polygauss",
        {"lam": lam, "delta": params.delta, "n_max": params.n_max},
        gain=1.0,
    )
    return EnsembleResult(
        fid,
        ensemble_fidelity_closed_form(lam, params.delta),
        params.tail_bound,
        tuple(terms),
        min(params.n_max, polygauss_max_n) + 1,
    )
