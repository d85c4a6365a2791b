"""Gaussian states over mixed quantum/classical phase-space variables.

Quadrature convention: the covariance matrix is ``gamma_ij = 2 Re<dy_i dy_j>``,
so the vacuum has ``cov = I`` and a classical variable with covariance entry
``v_c`` has actual variance ``v_c / 2``.  Every formula in this package uses
that convention.

States are immutable values; all operations return new states.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

SYM_TOL = 1e-12
PSD_TOL = 1e-10
PINV_RTOL = 1e-12

QUANTUM = "quantum"
CLASSICAL = "classical"


class ValidationError(ValueError):
    """Invalid parameters or inconsistent inputs."""


class NumericalError(RuntimeError):
    """A numerical step produced a non-finite or out-of-range value."""


class UnphysicalStateWarning(UserWarning):
    pass


@dataclass(frozen=True)
class VariableLabel:
    """One phase-space coordinate.

    ``pair`` names the conjugate pair (mode) the variable belongs to and
    ``role`` is ``"x"`` (position-like) or ``"p"`` (momentum-like).
    """

    name: str
    kind: str = QUANTUM
    pair: str = ""
    role: str = "x"

    def __post_init__(self):
        if self.kind not in (QUANTUM, CLASSICAL):
            raise ValidationError(f"unknown variable kind {self.kind!r}")
        if self.role not in ("x", "p"):
            raise ValidationError(f"unknown quadrature role {self.role!r}")

    @property
    def is_quantum(self) -> bool:
        return self.kind == QUANTUM


def mode(pair: str, kind: str = QUANTUM) -> tuple[VariableLabel, VariableLabel]:
    """The ``(x_pair, p_pair)`` labels of one mode."""
    return (
        VariableLabel(f"x_{pair}", kind, pair, "x"),
        VariableLabel(f"p_{pair}", kind, pair, "p"),
    )


def _check_labels(labels: Sequence[VariableLabel]) -> None:
    names = [lab.name for lab in labels]
    if len(set(names)) != len(names):
        raise ValidationError(f"duplicate variable names in {names}")
    roles: dict[str, set[str]] = {}
    for lab in labels:
        if lab.is_quantum:
            roles.setdefault(lab.pair, set()).add(lab.role)
    for pair, seen in roles.items():
        if seen != {"x", "p"}:
            raise ValidationError(f"quantum pair {pair!r} is incomplete: {sorted(seen)}")


def symplectic_form(labels: Sequence[VariableLabel]) -> np.ndarray:
    """Degenerate symplectic form: +-1 between conjugate quantum variables, 0 elsewhere."""
    d = len(labels)
    omega = np.zeros((d, d))
    xs = {lab.pair: i for i, lab in enumerate(labels) if lab.is_quantum and lab.role == "x"}
    for j, lab in enumerate(labels):
        if lab.is_quantum and lab.role == "p" and lab.pair in xs:
            i = xs[lab.pair]
            omega[i, j] = 1.0
            omega[j, i] = -1.0
    return omega


@dataclass(frozen=True, eq=False)
class GaussianState:
    labels: tuple[VariableLabel, ...]
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        labels = tuple(self.labels)
        _check_labels(labels)
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float)
        d = len(labels)
        if mean.shape != (d,) or cov.shape != (d, d):
            raise ValidationError(
                f"shape mismatch: {d} labels, mean {mean.shape}, cov {cov.shape}"
            )
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise NumericalError("non-finite entries in Gaussian state")
        scale = max(1.0, float(np.max(np.abs(cov)))) if d else 1.0
        if np.max(np.abs(cov - cov.T), initial=0.0) > 1e-8 * scale:
            raise ValidationError("covariance matrix is not symmetric")
        cov = 0.5 * (cov + cov.T)
        if d and np.linalg.eigvalsh(cov)[0] < -PSD_TOL * scale:
            raise ValidationError("covariance matrix is not positive semidefinite")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(lab.name for lab in self.labels)

    def index(self, names: Iterable[str]) -> list[int]:
        lookup = {n: i for i, n in enumerate(self.names)}
        try:
            return [lookup[n] for n in names]
        except KeyError as exc:
            raise ValidationError(f"unknown variable {exc.args[0]!r}") from None

    def block(self, rows: Iterable[str], cols: Iterable[str] | None = None) -> np.ndarray:
        r = self.index(rows)
        c = r if cols is None else self.index(cols)
        return self.cov[np.ix_(r, c)]

    def is_physical(self, tol: float = PSD_TOL) -> bool:
        """Check ``cov + i*Omega >= 0`` on the quantum variables."""
        q = [i for i, lab in enumerate(self.labels) if lab.is_quantum]
        if not q:
            return True
        sub = self.cov[np.ix_(q, q)] + 1j * symplectic_form([self.labels[i] for i in q])
        return bool(np.linalg.eigvalsh(sub)[0] >= -tol)

    def check_physical(self) -> bool:
        ok = self.is_physical()
        if not ok:
            warnings.warn(
                "quantum block violates the uncertainty relation", UnphysicalStateWarning
            )
        return ok


def block_diag_states(*states: GaussianState) -> GaussianState:
    """Tensor product of independent states."""
    labels = tuple(lab for s in states for lab in s.labels)
    mean = np.concatenate([s.mean for s in states])
    d = len(labels)
    cov = np.zeros((d, d))
    i = 0
    for s in states:
        n = len(s.labels)
        cov[i : i + n, i : i + n] = s.cov
        i += n
    return GaussianState(labels, mean, cov)


def vacuum_plus_classical(quantum_pairs: int, v_c: float, pairs: Sequence[str] | None = None) -> GaussianState:
    """Zero-mean vacuum on ``quantum_pairs`` modes joined with a classical
    pair ``(x_cl, p_cl)`` of covariance entry ``v_c``."""
    if v_c < 0:
        raise ValidationError(f"classical variance must be non-negative, got v_c={v_c}")
    if quantum_pairs < 0:
        raise ValidationError("quantum_pairs must be non-negative")
    if pairs is None:
        pairs = [str(i + 1) for i in range(quantum_pairs)]
    if len(pairs) != quantum_pairs:
        raise ValidationError("one pair name per quantum mode required")
    labels = [lab for p in pairs for lab in mode(p)] + list(mode("cl", CLASSICAL))
    diag = [1.0] * (2 * quantum_pairs) + [float(v_c)] * 2
    return GaussianState(tuple(labels), np.zeros(len(labels)), np.diag(diag))


@dataclass(frozen=True, eq=False)
class LinearMap:
    """Real linear map ``y -> matrix @ y`` on a state's variables.

    ``labels`` gives the output variables when the map also changes basis
    (e.g. into beam-splitter sum/difference coordinates); ``None`` keeps the
    input labels.  ``physical`` marks maps that must preserve the degenerate
    symplectic form.
    """

    matrix: np.ndarray
    description: str = ""
    labels: tuple[VariableLabel, ...] | None = None
    physical: bool = False

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValidationError(f"linear map must be square, got shape {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(self.labels))

    def inverse(self, labels: Sequence[VariableLabel] | None = None) -> "LinearMap":
        return LinearMap(
            np.linalg.inv(self.matrix),
            f"inverse of {self.description}".strip(),
            tuple(labels) if labels is not None else None,
            self.physical,
        )

    def preserves_symplectic_form(self, labels: Sequence[VariableLabel], tol: float = 1e-10) -> bool:
        out = self.labels if self.labels is not None else tuple(labels)
        s = self.matrix
        lhs = s @ symplectic_form(labels) @ s.T
        return bool(np.max(np.abs(lhs - symplectic_form(out)), initial=0.0) < tol)


def linear_map(
    labels: Sequence[VariableLabel],
    rules: Mapping[str, Mapping[str, float]],
    description: str = "",
    rename: Mapping[str, VariableLabel] | None = None,
    physical: bool = False,
) -> LinearMap:
    """Build a map from substitution rules ``new_v = sum coeff * old_u``.

    Variables without a rule are left unchanged.  ``rename`` assigns new
    labels to output positions (keyed by the old name).

    >>> lab = mode("3") + mode("cl", CLASSICAL)
    >>> linear_map(lab, {"x_3": {"x_3": 1, "x_cl": 1}}).matrix[0]
    array([1., 0., 1., 0.])
    """
    names = [lab.name for lab in labels]
    pos = {n: i for i, n in enumerate(names)}
    m = np.eye(len(names))
    for target, terms in rules.items():
        if target not in pos:
            raise ValidationError(f"unknown variable {target!r}")
        row = np.zeros(len(names))
        for src, coeff in terms.items():
            if src not in pos:
                raise ValidationError(f"unknown variable {src!r}")
            row[pos[src]] += coeff
        m[pos[target]] = row
    out = None
    if rename:
        out = tuple(rename.get(lab.name, lab) for lab in labels)
    return LinearMap(m, description, out, physical)


def apply_map(state: GaussianState, S: LinearMap) -> GaussianState:
    """``cov -> S cov S^T`` and ``mean -> S mean``."""
    d = len(state.labels)
    if S.matrix.shape != (d, d):
        raise ValidationError(
            f"map of shape {S.matrix.shape} does not act on {d} variables"
        )
    labels = S.labels if S.labels is not None else state.labels
    cov = S.matrix @ state.cov @ S.matrix.T
    return GaussianState(labels, S.matrix @ state.mean, 0.5 * (cov + cov.T))


def pseudo_inverse(M: np.ndarray, rel_tol: float = PINV_RTOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse of a symmetric matrix via eigendecomposition.

    Eigenvalues with ``|w| <= rel_tol * max|w|`` are treated as zero.
    """
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return M.copy()
    w, v = np.linalg.eigh(0.5 * (M + M.T))
    cutoff = rel_tol * np.max(np.abs(w))
    keep = np.abs(w) > cutoff
    if not np.any(keep):
        return np.zeros_like(M)
    inv_w = np.zeros_like(w)
    inv_w[keep] = 1.0 / w[keep]
    return (v * inv_w) @ v.T


@dataclass(frozen=True)
class MeasurementSpec:
    """Homodyne detection of ``measured`` out of the candidate ``block``.

    The whole block is removed from the state after the measurement; the
    projector has unity at the measured entries of the block.
    """

    block: tuple[str, ...]
    measured: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "block", tuple(self.block))
        object.__setattr__(self, "measured", tuple(self.measured))
        missing = set(self.measured) - set(self.block)
        if missing:
            raise ValidationError(f"measured variables {sorted(missing)} not in block")

    @property
    def projector(self) -> np.ndarray:
        return np.diag([1.0 if n in self.measured else 0.0 for n in self.block])

    def validate(self, state: GaussianState) -> None:
        by_name = dict(zip(state.names, state.labels))
        for n in self.block:
            if n not in by_name:
                raise ValidationError(f"measured variable {n!r} not in state")
        pairs = []
        for n in self.measured:
            lab = by_name[n]
            if not lab.is_quantum:
                raise ValidationError(f"cannot homodyne classical variable {n!r}")
            pairs.append(lab.pair)
        if len(set(pairs)) != len(pairs):
            raise ValidationError("conjugate variables cannot be measured together")


def _partition(state: GaussianState, spec: MeasurementSpec):
    spec.validate(state)
    keep = [n for n in state.names if n not in spec.block]
    ia, ib = state.index(keep), state.index(spec.block)
    A = state.cov[np.ix_(ia, ia)]
    B = state.cov[np.ix_(ib, ib)]
    C = state.cov[np.ix_(ia, ib)]
    labels = tuple(state.labels[i] for i in ia)
    return labels, ia, ib, A, B, C


def measurement_gain(state: GaussianState, spec: MeasurementSpec) -> np.ndarray:
    """``K = C (pi B pi)^- pi``: maps outcome deviations to mean shifts."""
    _, _, _, _, B, C = _partition(state, spec)
    pi = spec.projector
    return C @ pseudo_inverse(pi @ B @ pi) @ pi


def condition_on_measurement(
    state: GaussianState, spec: MeasurementSpec, outcomes: Sequence[float]
) -> GaussianState:
    """Gaussian state of the unmeasured variables given homodyne outcomes.

    ``outcomes`` is either one value per measured variable, or one value per
    block entry (entries at unmeasured positions are ignored).
    """
    labels, ia, ib, A, B, C = _partition(state, spec)
    o = np.asarray(outcomes, dtype=float).reshape(-1)
    if o.shape[0] == len(spec.measured):
        full = np.zeros(len(spec.block))
        for val, n in zip(o, spec.measured):
            full[spec.block.index(n)] = val
        o = full
    elif o.shape[0] != len(spec.block):
        raise ValidationError(
            f"expected {len(spec.measured)} outcomes (or {len(spec.block)} with "
            f"placeholders), got {o.shape[0]}"
        )
    pi = spec.projector
    Bm = pseudo_inverse(pi @ B @ pi)
    cov = A - C @ Bm @ C.T
    mean = state.mean[ia] + C @ Bm @ pi @ (o - state.mean[ib])
    return GaussianState(labels, mean, 0.5 * (cov + cov.T))


def average_over_outcomes(state: GaussianState, spec: MeasurementSpec) -> GaussianState:
    """Conditional state averaged over the random homodyne outcomes.

    The conditional covariance is outcome independent; the conditional mean
    moves with the outcome, and its spread ``K (pi B pi) K^T`` is added back.
    """
    labels, ia, _, A, B, C = _partition(state, spec)
    pi = spec.projector
    PBP = pi @ B @ pi
    Bm = pseudo_inverse(PBP)
    K = C @ Bm @ pi
    cov = (A - C @ Bm @ C.T) + K @ PBP @ K.T
    return GaussianState(labels, state.mean[ia], 0.5 * (cov + cov.T))


def marginal(state: GaussianState, keep: Sequence[str]) -> GaussianState:
    if not keep:
        raise ValidationError("marginal needs at least one variable")
    idx = state.index(keep)
    return GaussianState(
        tuple(state.labels[i] for i in idx), state.mean[idx], state.cov[np.ix_(idx, idx)]
    )


def _check_pd(gamma: np.ndarray) -> np.ndarray:
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (2, 2):
        raise ValidationError(f"expected a 2x2 covariance, got shape {gamma.shape}")
    if not np.all(np.isfinite(gamma)):
        raise NumericalError("non-finite covariance")
    gamma = 0.5 * (gamma + gamma.T)
    if np.linalg.eigvalsh(gamma)[0] <= 0:
        raise ValidationError("covariance is not positive definite")
    return gamma


def fidelity_vs_vacuum(gamma_out: np.ndarray) -> float:
    """Overlap ``2 pi int W_vac W_out`` of a zero-mean single-mode state with the vacuum."""
    g = _check_pd(gamma_out)
    g_res = np.linalg.inv(np.linalg.inv(g) + np.eye(2))
    return float(2.0 * np.sqrt(np.linalg.det(g_res) / np.linalg.det(g)))


def fidelity_vs_coherent(gamma: np.ndarray, delta_mean: Sequence[float]) -> float:
    """Overlap with a coherent state whose mean differs by ``delta_mean``."""
    g = _check_pd(gamma)
    dm = np.asarray(delta_mean, dtype=float).reshape(2)
    s = g + np.eye(2)
    return float(2.0 / np.sqrt(np.linalg.det(s)) * np.exp(-dm @ np.linalg.solve(s, dm)))
