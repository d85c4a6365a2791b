import math

import numpy as np
import pytest

from cvfid.gaussian import CLASSICAL, NumericalError, ValidationError, mode
from cvfid.protocols import (
    FidelityResult,
    MemoryParams,
    TeleportationParams,
    beam_splitter_23,
    epr_covariance,
    memory_conditioned,
    memory_fidelity_analytic,
    memory_output_covariance,
    memory_pipeline,
    memory_prepared_state,
    optimal_gain_memory,
    optimal_gain_teleport,
    optimize_gain,
    teleport_conditioned,
    teleport_fidelity_analytic,
    teleport_pipeline,
    teleport_prepared_state,
    validate_channel,
)

import oracles

TELEPORT_GRID = [
    (n, frac * math.sqrt(n * n - 1), vc)
    for n in (1.0, 1.5, 2.0, 4.0, 8.0)
    for frac in (0.0, 0.5, 1.0)
    for vc in (0.0, 1.0, 5.0, 100.0)
]


# -- validation ----------------------------------------------------------------

@pytest.mark.parametrize("n,k", [(0.5, 0.0), (2.0, 2.0), (2.0, -2.5), (math.inf, 0.0)])
def test_invalid_channel(n, k):
    with pytest.raises(ValidationError):
        validate_channel(n, k)


def test_uncertainty_violation_message():
    # |k| < n but n^2 - k^2 < 1
    with pytest.raises(ValidationError, match=r"n\^2 - k\^2 < 1"):
        validate_channel(1.2, 0.9)


def test_params_validation():
    with pytest.raises(ValidationError):
        TeleportationParams(2.0, 1.0, v_c=-1.0)
    with pytest.raises(ValidationError):
        TeleportationParams(2.0, 1.0, g=-0.1)
    with pytest.raises(ValidationError):
        MemoryParams(-1.0)
    with pytest.raises(ValidationError):
        MemoryParams(1.0, r=0.5)
    with pytest.raises(ValidationError):
        MemoryParams(1.0, g=math.nan)


def test_fidelity_result_guards():
    with pytest.raises(NumericalError):
        FidelityResult(1.5, "analytic")
    with pytest.raises(NumericalError):
        FidelityResult(math.nan, "analytic")
    with pytest.raises(ValidationError):
        FidelityResult(0.5, "guess")


def test_epr_covariance_is_physical():
    n = 2.0
    st = epr_covariance(n, math.sqrt(n * n - 1))
    assert st.is_physical()
    assert np.linalg.eigvalsh(st.cov)[0] == pytest.approx(n - math.sqrt(n * n - 1))


# -- teleportation ---------------------------------------------------------------

def test_prepared_state_labels_and_physicality():
    st = teleport_prepared_state(TeleportationParams(2.0, 1.0, 3.0))
    assert st.names == ("x_1", "p_1", "x_+", "p_+", "x_-", "p_-", "x_cl", "p_cl")
    assert st.is_physical()


def test_beam_splitter_is_symplectic():
    labels = mode("1") + mode("2") + mode("3") + mode("cl", CLASSICAL)
    bs = beam_splitter_23(labels)
    assert bs.physical and bs.preserves_symplectic_form(labels)
    assert [lab.name for lab in bs.labels][2:6] == ["x_+", "p_+", "x_-", "p_-"]


@pytest.mark.parametrize("n,k,vc", TELEPORT_GRID[::5])
def test_teleport_pipeline_against_noise_model(n, k, vc):
    for g in (0.0, 0.4, 1.0, 1.3):
        got = teleport_pipeline(TeleportationParams(n, k, vc, g)).value
        assert got == pytest.approx(oracles.teleport_fidelity_any_gain(n, k, g, vc), abs=1e-12)


@pytest.mark.parametrize("n,k,vc", TELEPORT_GRID)
def test_teleport_closed_form(n, k, vc):
    res = teleport_pipeline(TeleportationParams(n, k, vc))
    assert res.value == pytest.approx(teleport_fidelity_analytic(n, k, vc), abs=1e-10)
    assert res.method == "covariance-pipeline"
    assert res.gain == pytest.approx(optimal_gain_teleport(n, k, vc))


def test_teleport_limits():
    for vc in (0.0, 1.0, 7.0):
        f = teleport_pipeline(TeleportationParams(1.0, 0.0, vc)).value
        assert f == pytest.approx((2 + vc) / (2 + 2 * vc), abs=1e-12)
    n = 2.0
    k = math.sqrt(3.0)
    assert teleport_pipeline(TeleportationParams(n, k, 0.0)).value == pytest.approx(1.0, abs=1e-10)
    assert teleport_pipeline(TeleportationParams(n, k, 1e6)).value == pytest.approx(1 / (1 + n - k), abs=1e-4)


def test_teleport_conditioned_covariance_is_outcome_independent():
    p = TeleportationParams(2.0, 1.5, 2.0, 0.8)
    a = teleport_conditioned(p, 0.0, 0.0)
    b = teleport_conditioned(p, 1.7, -3.1)
    assert np.allclose(a.cov, b.cov, atol=1e-13)
    assert not np.allclose(a.mean, b.mean)


def test_teleport_conditioned_mean_oracle():
    # mode 1 given x_- = xi: regression coefficient k/(1+n+v_c) times sqrt(2) xi,
    # and x_cl moves with -v_c/(1+n+v_c) sqrt(2) xi
    n, k, vc = 2.0, 1.2, 3.0
    xi = 0.9
    st = teleport_conditioned(TeleportationParams(n, k, vc, 0.0), 0.0, xi)
    c = math.sqrt(2) * xi / (1 + n + vc)
    assert st.mean[st.names.index("x_1")] == pytest.approx(k * c)
    assert st.mean[st.names.index("x_cl")] == pytest.approx(-vc * c)


def test_teleport_gain_derivative_vanishes_at_optimum():
    for n, k, vc in TELEPORT_GRID[::7]:
        g0 = optimal_gain_teleport(n, k, vc)
        f = lambda g: teleport_pipeline(TeleportationParams(n, k, vc, g)).value
        assert abs(oracles.gain_derivative(f, g0)) < 1e-6


# -- memory ------------------------------------------------------------------------

MEMORY_GRID = [(kp, vc, r) for kp in (0.0, 0.5, 1.0, 1.5) for vc in (0.0, 1.0, 10.0) for r in (1.0, 2.0, 4.0)]


@pytest.mark.parametrize("kappa,vc,r", MEMORY_GRID)
def test_memory_closed_form(kappa, vc, r):
    got = memory_pipeline(MemoryParams(kappa, r, vc)).value
    assert got == pytest.approx(memory_fidelity_analytic(kappa, vc, r), abs=1e-10)


@pytest.mark.parametrize("kappa,vc,r", MEMORY_GRID[::4])
def test_memory_pipeline_against_heisenberg_oracle(kappa, vc, r):
    for g in (0.0, 0.3, 1.0, 1.7):
        got = memory_pipeline(MemoryParams(kappa, r, vc, g)).value
        assert got == pytest.approx(oracles.memory_fidelity_any_gain(kappa, vc, r, g), abs=1e-12)


def test_memory_spot_values():
    assert memory_pipeline(MemoryParams(1.0, 1.0, 0.0)).value == pytest.approx(2 * math.sqrt(2) / 3, abs=1e-10)
    assert memory_pipeline(MemoryParams(1.0, 1.0, 1e6)).value == pytest.approx(math.sqrt(2 / 3), abs=1e-3)
    assert memory_pipeline(MemoryParams(0.0, 1.0, 0.0)).value == pytest.approx(1.0, abs=1e-12)
    for r in (1.0, 2.0, 4.0, 8.0):
        f = memory_pipeline(MemoryParams(1.0, r, 1e4)).value
        assert f == pytest.approx(math.sqrt(2 * r / (2 * r + 1)), abs=1e-3)


def test_memory_coherent_atoms_gain():
    # without squeezing the optimal gain is (kappa + v_c) / (1 + kappa^2 + v_c)
    assert optimal_gain_memory(1.0, 0.0) == pytest.approx(0.5)
    assert optimal_gain_memory(2.0, 3.0, 1.0) == pytest.approx(5.0 / 8.0)


def test_memory_conditioned_mean_oracle():
    kappa, vc = 1.3, 2.0
    xi = 0.7
    st = memory_conditioned(MemoryParams(kappa, 1.0, vc, 0.0), xi)
    c = xi / (1 + kappa * kappa + vc)
    assert st.mean[st.names.index("p_A")] == pytest.approx(kappa * c)
    assert st.mean[st.names.index("x_cl")] == pytest.approx(vc * c)


def test_memory_prepared_state_physical():
    st = memory_prepared_state(MemoryParams(1.2, 3.0, 4.0))
    assert st.is_physical()
    cov = memory_output_covariance(MemoryParams(1.2, 3.0, 4.0))
    assert cov.shape == (2, 2)


# -- optimiser -----------------------------------------------------------------

def test_optimize_gain_on_parabola():
    g, f = optimize_gain(lambda g: 1 - (g - 0.3721) ** 2)
    assert g == pytest.approx(0.3721, abs=1e-7)
    assert f == pytest.approx(1.0)


def test_optimize_gain_boundary_maximum():
    g, _ = optimize_gain(lambda g: -g)
    assert g == pytest.approx(0.0, abs=1e-8)


def test_optimize_gain_rejects_nonfinite():
    with pytest.raises(NumericalError):
        optimize_gain(lambda g: math.nan)
    with pytest.raises(ValidationError):
        optimize_gain(lambda g: g, bracket=(1.0, 1.0))


@pytest.mark.parametrize("n,k,vc", TELEPORT_GRID[::3])
def test_optimizer_recovers_teleport_gain(n, k, vc):
    g, _ = optimize_gain(lambda g: teleport_pipeline(TeleportationParams(n, k, vc, g)).value)
    assert g == pytest.approx(optimal_gain_teleport(n, k, vc), abs=1e-6)


@pytest.mark.parametrize("kappa,vc,r", MEMORY_GRID[::3])
def test_optimizer_recovers_memory_gain(kappa, vc, r):
    g, _ = optimize_gain(lambda g: memory_pipeline(MemoryParams(kappa, r, vc, g)).value)
    assert g == pytest.approx(optimal_gain_memory(kappa, vc, r), abs=1e-6)
