"""Monte-Carlo estimates of protocol fidelities.

Each sample draws a classical displacement, builds the displaced pure
Gaussian state of the quantum modes, draws homodyne outcomes from their
marginal, conditions on them, applies the feedback displacement and scores
the overlap with the displaced target.  This deliberately shares no code
with the covariance pipelines beyond the single-sample overlap formula.

Random streams: ``numpy.random.SeedSequence(seed).spawn(n_batches)`` feeding
one PCG64 generator per batch, so results do not depend on ``jobs``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .gaussian import NumericalError, ValidationError
from .protocols import FidelityResult, MemoryParams, TeleportationParams

GENERATOR = "numpy.random.PCG64"
DEFAULT_SAMPLES = 100_000
BATCH_SIZE = 100_000

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class McConfig:
    protocol: str
    params: TeleportationParams | MemoryParams
    samples: int = DEFAULT_SAMPLES
    seed: int = 0
    batch_size: int = BATCH_SIZE

    def __post_init__(self):
        expected = {"teleport": TeleportationParams, "memory": MemoryParams}
        if self.protocol not in expected:
            raise ValidationError(f"unknown protocol {self.protocol!r}")
        if not isinstance(self.params, expected[self.protocol]):
            raise ValidationError(f"{self.protocol} needs {expected[self.protocol].__name__}")
        if int(self.samples) != self.samples or self.samples < 1:
            raise ValidationError(f"samples must be a positive integer, got {self.samples}")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must fit in 64 bits")


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    samples: int
    m2: float = 0.0  # sum of squared deviations, kept for pooling
    seed: int | None = None
    generator: str = GENERATOR

    @classmethod
    def from_values(cls, values: np.ndarray, seed: int | None = None) -> "McEstimate":
        n = len(values)
        mean = float(np.mean(values))
        m2 = float(np.sum((values - mean) ** 2))
        return cls(mean, _stderr(m2, n), n, m2, seed)

    def merge(self, other: "McEstimate") -> "McEstimate":
        """Pool two independent estimates (Chan et al. parallel update)."""
        n = self.samples + other.samples
        delta = other.mean - self.mean
        mean = self.mean + delta * other.samples / n
        m2 = self.m2 + other.m2 + delta * delta * self.samples * other.samples / n
        return McEstimate(mean, _stderr(m2, n), n, m2, self.seed, self.generator)

    def to_result(self, params: dict | None = None, gain: float | None = None) -> FidelityResult:
        return FidelityResult(self.mean, "monte-carlo", dict(params or {}), self.stderr, gain)


def _stderr(m2: float, n: int) -> float:
    if n < 2:
        return 0.0
    return math.sqrt(max(m2, 0.0) / (n - 1) / n)


def _coherent_overlap(cov: np.ndarray, delta: np.ndarray) -> np.ndarray:
    s = cov + np.eye(2)
    s_inv = np.linalg.inv(s)
    quad = np.einsum("ni,ij,nj->n", delta, s_inv, delta)
    return 2.0 / math.sqrt(np.linalg.det(s)) * np.exp(-quad)


def _condition(cov, unmeasured, measured):
    """Gain and conditional covariance by direct solve on the measured block."""
    c_ab = cov[np.ix_(unmeasured, measured)]
    c_bb = cov[np.ix_(measured, measured)]
    gain = np.linalg.solve(c_bb, c_ab.T).T
    cond = cov[np.ix_(unmeasured, unmeasured)] - gain @ c_ab.T
    return gain, 0.5 * (cond + cond.T), c_bb


def _teleport_batch(p: TeleportationParams, g: float, rng: np.random.Generator, size: int):
    n, k, vc = p.n, p.k, p.v_c
    cov = np.eye(6)
    cov[:4, :4] = [[n, 0, k, 0], [0, n, 0, -k], [k, 0, n, 0], [0, -k, 0, n]]
    # (x1, p1, x2, p2, x3, p3) -> (x1, p1, x+, p+, x-, p-)
    T = np.eye(6)
    h = 1 / SQRT2
    T[2:, 2:] = [[h, 0, h, 0], [0, h, 0, h], [h, 0, -h, 0], [0, h, 0, -h]]
    cov = T @ cov @ T.T
    gain, cond, c_bb = _condition(cov, [0, 1], [3, 4])

    cl = rng.standard_normal((size, 2)) * math.sqrt(vc / 2)
    mean0 = np.zeros((size, 6))
    mean0[:, 4:] = cl
    mean = mean0 @ T.T
    m_b = mean[:, [3, 4]]
    chol = np.linalg.cholesky(c_bb / 2)
    outcomes = m_b + rng.standard_normal((size, 2)) @ chol.T
    eta, xi = outcomes[:, 0], outcomes[:, 1]
    m_a = mean[:, [0, 1]] + (outcomes - m_b) @ gain.T
    m_a[:, 0] -= g * SQRT2 * xi
    m_a[:, 1] += g * SQRT2 * eta
    return _coherent_overlap(cond, m_a - cl)


def _memory_batch(p: MemoryParams, g: float, rng: np.random.Generator, size: int):
    kappa, r, vc = p.kappa, p.r, p.v_c
    # (x_A, p_A, x_L, p_L)
    cov = np.diag([1.0 / r, r, 1.0, 1.0])
    qnd = np.eye(4)
    qnd[0, 3] = kappa
    qnd[2, 1] = kappa
    cov = qnd @ cov @ qnd.T
    gain, cond, c_bb = _condition(cov, [0, 1], [2])

    cl = rng.standard_normal((size, 2)) * math.sqrt(vc / 2)
    mean0 = np.zeros((size, 4))
    mean0[:, 2:] = cl
    mean = mean0 @ qnd.T
    m_b = mean[:, [2]]
    xi = m_b + rng.standard_normal((size, 1)) * math.sqrt(c_bb[0, 0] / 2)
    m_a = mean[:, [0, 1]] + (xi - m_b) @ gain.T
    m_a[:, 1] -= g * xi[:, 0]
    # stored target: x_A <- p_cl, p_A <- -x_cl
    target = np.stack([cl[:, 1], -cl[:, 0]], axis=1)
    return _coherent_overlap(cond, m_a - target)


_SAMPLERS = {"teleport": _teleport_batch, "memory": _memory_batch}


def run(config: McConfig, jobs: int = 1) -> McEstimate:
    sampler = _SAMPLERS[config.protocol]
    g = config.params.gain
    sizes = [config.batch_size] * (config.samples // config.batch_size)
    if config.samples % config.batch_size:
        sizes.append(config.samples % config.batch_size)
    streams = np.random.SeedSequence(int(config.seed)).spawn(len(sizes))

    def batch(i: int) -> McEstimate:
        rng = np.random.Generator(np.random.PCG64(streams[i]))
        values = sampler(config.params, g, rng, sizes[i])
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise NumericalError(
                f"non-finite fidelity in batch {i}, sample {bad}; params={config.params}"
            )
        return McEstimate.from_values(values, config.seed)

    if jobs > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(batch, range(len(sizes))))
    else:
        parts = [batch(i) for i in range(len(sizes))]
    est = parts[0]
    for part in parts[1:]:
        est = est.merge(part)
    return est


def mc_teleport(params: TeleportationParams, samples: int = DEFAULT_SAMPLES, seed: int = 0, jobs: int = 1) -> McEstimate:
    return run(McConfig("teleport", params, samples, seed), jobs)


def mc_memory(params: MemoryParams, samples: int = DEFAULT_SAMPLES, seed: int = 0, jobs: int = 1) -> McEstimate:
    return run(McConfig("memory", params, samples, seed), jobs)
