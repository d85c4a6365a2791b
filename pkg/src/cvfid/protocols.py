"""Teleportation and memory-storage protocols in the covariance-matrix picture.

Both protocols follow the same recipe: join the channel/memory state with a
coherent input displaced by classical variables, mix, feed the homodyne
record back with gain ``g``, average over the outcomes, undo the classical
displacement and compare the remaining single-mode state with the vacuum.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .gaussian import (
    CLASSICAL,
    GaussianState,
    MeasurementSpec,
    NumericalError,
    ValidationError,
    apply_map,
    average_over_outcomes,
    block_diag_states,
    condition_on_measurement,
    fidelity_vs_vacuum,
    linear_map,
    marginal,
    mode,
    vacuum_plus_classical,
)

SQRT2 = math.sqrt(2.0)
HEISENBERG_TOL = 1e-12

METHODS = ("analytic", "covariance-pipeline", "polygauss", "monte-carlo")


@dataclass(frozen=True)
class TeleportationParams:
    """EPR channel ``(n, k)``, classical input spread ``v_c`` and feedback gain.

    ``g=None`` selects the optimal gain.
    """

    n: float
    k: float
    v_c: float = 0.0
    g: float | None = None

    def __post_init__(self):
        validate_channel(self.n, self.k)
        if not self.v_c >= 0:
            raise ValidationError(f"v_c must be >= 0, got {self.v_c}")
        if self.g is not None and not (math.isfinite(self.g) and self.g >= 0):
            raise ValidationError(f"gain must be finite and >= 0, got {self.g}")

    @property
    def delta(self) -> float:
        """EPR variance ``n - k``."""
        return self.n - self.k

    @property
    def gain(self) -> float:
        return optimal_gain_teleport(self.n, self.k, self.v_c) if self.g is None else self.g


@dataclass(frozen=True)
class MemoryParams:
    kappa: float
    r: float = 1.0
    v_c: float = 0.0
    g: float | None = None

    def __post_init__(self):
        if not self.kappa >= 0:
            raise ValidationError(f"kappa must be >= 0, got {self.kappa}")
        if not self.r >= 1:
            raise ValidationError(f"squeezing r must be >= 1, got {self.r}")
        if not self.v_c >= 0:
            raise ValidationError(f"v_c must be >= 0, got {self.v_c}")
        if self.g is not None and not math.isfinite(self.g):
            raise ValidationError(f"gain must be finite, got {self.g}")

    @property
    def gain(self) -> float:
        return optimal_gain_memory(self.kappa, self.v_c, self.r) if self.g is None else self.g


@dataclass(frozen=True)
class FidelityResult:
    value: float
    method: str
    params: dict = field(default_factory=dict)
    stderr: float | None = None
    gain: float | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}")
        if not (math.isfinite(self.value) and -1e-9 <= self.value <= 1 + 1e-9):
            raise NumericalError(f"fidelity {self.value!r} outside [0, 1]")


def validate_channel(n: float, k: float) -> None:
    if not (math.isfinite(n) and math.isfinite(k)):
        raise ValidationError("channel parameters must be finite")
    if n < 1:
        raise ValidationError(f"n >= 1 required, got n={n}")
    if abs(k) >= n:
        raise ValidationError(f"|k| < n required, got n={n}, k={k}")
    if n * n - k * k < 1 - HEISENBERG_TOL:
        raise ValidationError(f"n^2 - k^2 < 1 (n={n}, k={k}) violates the uncertainty relation")


def epr_covariance(n: float, k: float) -> GaussianState:
    """Symmetric two-mode channel over ``(x_1, p_1, x_2, p_2)``."""
    validate_channel(n, k)
    cov = np.array(
        [
            [n, 0, k, 0],
            [0, n, 0, -k],
            [k, 0, n, 0],
            [0, -k, 0, n],
        ],
        dtype=float,
    )
    return GaussianState(mode("1") + mode("2"), np.zeros(4), cov)


# -- teleportation ------------------------------------------------------------

TELEPORT_MEASUREMENT = MeasurementSpec(
    block=("x_+", "p_+", "x_-", "p_-"), measured=("p_+", "x_-")
)


def displacement_map(labels, target: str, sign: float = 1.0, description: str = ""):
    """``x_target -> x_target + sign * x_cl`` and likewise for p."""
    return linear_map(
        labels,
        {
            f"x_{target}": {f"x_{target}": 1.0, "x_cl": sign},
            f"p_{target}": {f"p_{target}": 1.0, "p_cl": sign},
        },
        description or f"displace mode {target} by {sign:+g} x classical",
        physical=True,
    )


def beam_splitter_23(labels):
    """Change of basis ``(x_2, p_2, x_3, p_3) -> (x_+, p_+, x_-, p_-)``."""
    h = 1.0 / SQRT2
    xp, pp = mode("+")
    xm, pm = mode("-")
    return linear_map(
        labels,
        {
            "x_2": {"x_2": h, "x_3": h},
            "p_2": {"p_2": h, "p_3": h},
            "x_3": {"x_2": h, "x_3": -h},
            "p_3": {"p_2": h, "p_3": -h},
        },
        "50/50 sum/difference coordinates of modes 2 and 3",
        rename={"x_2": xp, "p_2": pp, "x_3": xm, "p_3": pm},
        physical=True,
    )


def teleport_feedback_map(labels, g: float):
    # feedback acts on the recorded (classical) outcomes, hence not symplectic
    return linear_map(
        labels,
        {
            "x_1": {"x_1": 1.0, "x_-": -g * SQRT2},
            "p_1": {"p_1": 1.0, "p_+": g * SQRT2},
        },
        f"feedback displacement with gain {g:g}",
    )


def teleport_prepared_state(params: TeleportationParams) -> GaussianState:
    """Joint state over ``(x_1, p_1, x_+, p_+, x_-, p_-, x_cl, p_cl)`` before feedback."""
    channel = epr_covariance(params.n, params.k)
    source = vacuum_plus_classical(1, params.v_c, pairs=["3"])
    source = apply_map(source, displacement_map(source.labels, "3"))
    joint = block_diag_states(channel, source)
    return apply_map(joint, beam_splitter_23(joint.labels))


def teleport_conditioned(params: TeleportationParams, eta: float, xi: float) -> GaussianState:
    """State of ``(x_1, p_1, x_cl, p_cl)`` after feedback, given outcomes
    ``eta`` for ``p_+`` and ``xi`` for ``x_-``."""
    state = teleport_prepared_state(params)
    state = apply_map(state, teleport_feedback_map(state.labels, params.gain))
    return condition_on_measurement(state, TELEPORT_MEASUREMENT, [eta, xi])


def teleport_output_covariance(params: TeleportationParams) -> np.ndarray:
    state = teleport_prepared_state(params)
    state = apply_map(state, teleport_feedback_map(state.labels, params.gain))
    state = average_over_outcomes(state, TELEPORT_MEASUREMENT)
    state = apply_map(
        state, displacement_map(state.labels, "1", -1.0, "undo the classical displacement")
    )
    return marginal(state, ["x_1", "p_1"]).cov


def teleport_pipeline(params: TeleportationParams) -> FidelityResult:
    value = fidelity_vs_vacuum(teleport_output_covariance(params))
    return FidelityResult(value, "covariance-pipeline", asdict(params), gain=params.gain)


def teleport_fidelity_analytic(n: float, k: float, v_c: float) -> float:
    """Closed-form fidelity at the optimal gain."""
    validate_channel(n, k)
    return 2.0 * (1 + n + v_c) / (1 + 2 * n + n * n - k * k + 2 * v_c * (1 + n - k))


def optimal_gain_teleport(n: float, k: float, v_c: float) -> float:
    return (k + v_c) / (1 + n + v_c)


# -- memory ---------------------------------------------------------------------

MEMORY_MEASUREMENT = MeasurementSpec(block=("x_L", "p_L"), measured=("x_L",))


def memory_prepared_state(params: MemoryParams) -> GaussianState:
    """Atoms, light and classical variables after the light-atom interaction."""
    atoms = GaussianState(mode("A"), np.zeros(2), np.diag([1.0 / params.r, params.r]))
    light = vacuum_plus_classical(1, params.v_c, pairs=["L"])
    state = block_diag_states(atoms, light)
    state = apply_map(state, displacement_map(state.labels, "L"))
    kappa = params.kappa
    interaction = linear_map(
        state.labels,
        {
            "x_A": {"x_A": 1.0, "p_L": kappa},
            "x_L": {"x_L": 1.0, "p_A": kappa},
        },
        f"QND light-atom interaction, kappa={kappa:g}",
        physical=True,
    )
    return apply_map(state, interaction)


def memory_feedback_map(labels, g: float):
    return linear_map(labels, {"p_A": {"p_A": 1.0, "x_L": -g}}, f"feedback p_A -= {g:g} x_L")


def memory_verification_map(labels):
    return linear_map(
        labels,
        {"x_A": {"x_A": 1.0, "p_cl": -1.0}, "p_A": {"p_A": 1.0, "x_cl": 1.0}},
        "undo the stored displacement",
        physical=True,
    )


def memory_conditioned(params: MemoryParams, xi: float) -> GaussianState:
    state = memory_prepared_state(params)
    state = apply_map(state, memory_feedback_map(state.labels, params.gain))
    return condition_on_measurement(state, MEMORY_MEASUREMENT, [xi])


def memory_output_covariance(params: MemoryParams) -> np.ndarray:
    state = memory_prepared_state(params)
    state = apply_map(state, memory_feedback_map(state.labels, params.gain))
    state = average_over_outcomes(state, MEMORY_MEASUREMENT)
    state = apply_map(state, memory_verification_map(state.labels))
    return marginal(state, ["x_A", "p_A"]).cov


def memory_pipeline(params: MemoryParams) -> FidelityResult:
    value = fidelity_vs_vacuum(memory_output_covariance(params))
    return FidelityResult(value, "covariance-pipeline", asdict(params), gain=params.gain)


def memory_fidelity_analytic(kappa: float, v_c: float, r: float = 1.0) -> float:
    """Closed-form storage fidelity at the optimal gain (squeezed atoms)."""
    kr = kappa * kappa * r
    common = r + r * v_c * kappa * kappa - 2 * r * v_c * kappa + r * v_c + kr
    d1 = common + 2 * v_c + 1
    d2 = common + 1
    return 2.0 * math.sqrt(r * (1 + kr + v_c) / (d1 * d2))


def optimal_gain_memory(kappa: float, v_c: float, r: float = 1.0) -> float:
    return (kappa * r + v_c) / (1 + kappa * kappa * r + v_c)


# -- gain optimisation ----------------------------------------------------------

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def optimize_gain(
    f: Callable[[float], float],
    bracket: tuple[float, float] = (0.0, 2.0),
    tol: float = 1e-8,
    scan: int = 41,
) -> tuple[float, float]:
    """Maximise ``f`` over ``bracket`` by coarse scan plus golden-section refinement.

    ``f`` is assumed unimodal around the best scan point.  Returns ``(g, f(g))``.
    """
    lo, hi = map(float, bracket)
    if not hi > lo:
        raise ValidationError(f"empty bracket {bracket}")

    def value(g: float) -> float:
        v = float(f(g))
        if not math.isfinite(v):
            raise NumericalError(f"objective is not finite at g={g}: {v}")
        return v

    grid = np.linspace(lo, hi, max(scan, 3))
    vals = [value(g) for g in grid]
    i = int(np.argmax(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]

    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = value(c), value(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = value(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = value(d)
    candidates = [(fc, c), (fd, d), (value(a), a), (value(b), b)]
    best_f, best_g = max(candidates)
    return best_g, best_f
