import numpy as np
import pytest
from scipy.linalg import expm

from sdkrefocus.composite import five_pulse_sdk, sequence_propagator
from sdkrefocus.fidelity import process_fidelity, target_sdk
from sdkrefocus.hilbert import SIGMA_Z, HilbertSpace
from sdkrefocus.optimize import adjust_displacement


@pytest.fixture(scope="module")
def space():
    return HilbertSpace(1, 14)


def test_already_optimal(space):
    u = target_sdk(space, 0.1, 0.0)
    res = adjust_displacement(u, space, 0.1, budget=200, eval_fock_levels=7)
    assert res.fidelity_after >= 1 - 1e-12
    assert res.fidelity_after >= res.fidelity_before
    assert abs(res.eta_eff - 0.1) < 1e-4
    assert abs(res.phase_eff) < 1e-4


def test_monotone_improvement_and_budget(space):
    u = target_sdk(space, 0.11, 0.05)
    res = adjust_displacement(u, space, 0.1, budget=300, eval_fock_levels=7)
    assert res.fidelity_after >= res.fidelity_before - 1e-12
    assert res.evaluations <= 300
    assert res.fidelity_after > 0.999999
    with pytest.raises(ValueError):
        adjust_displacement(u, space, 0.1, budget=10)


def test_spin_phase_absorbs_z_rotation(space):
    # a residual z rotation on the kick is exactly a kick-phase shift of
    # the target family
    u0 = target_sdk(space, 0.1, 0.0)
    rz = expm(-1j * 0.004 * np.kron(SIGMA_Z, np.eye(space.fock_cutoff)))
    u = rz @ u0
    before = process_fidelity(u, u0, space, 7).fidelity
    res = adjust_displacement(u, space, 0.1, budget=400, eval_fock_levels=7)
    assert 1 - res.fidelity_after < (1 - before) * 1e-3
    assert abs(res.phase_eff - 0.004) < 1e-4  # kick phase tracks the z angle


def test_optimum_stable_under_initial_perturbation(space):
    u = target_sdk(space, 0.105, 0.02)
    results = []
    for d_eta, d_ph in ((0.0, 0.0), (0.01, 0.0), (-0.01, 0.05), (0.02, -0.05)):
        res = adjust_displacement(u, space, 0.1, budget=500, eval_fock_levels=7,
                                  initial=(0.1 + d_eta, d_ph))
        results.append(res.fidelity_after)
    assert max(results) - min(results) <= 1e-9


def test_adjustment_keeps_quartic_sts_scaling():
    # frozen at the nominal point, the adjusted composite keeps its quartic
    # infidelity-vs-noise scaling
    space = HilbertSpace(1, 1)
    u0 = sequence_propagator(five_pulse_sdk(), 0.0, space, 0.0)
    res = adjust_displacement(u0, space, 0.0, budget=200, eval_fock_levels=1)
    frozen_target = target_sdk(space, res.eta_eff, res.phase_eff)

    def frozen_if(eps):
        u = sequence_propagator(five_pulse_sdk(), eps, space, 0.0)
        return process_fidelity(u, frozen_target, space, 1).infidelity

    r1 = frozen_if(0.02) / frozen_if(0.01)
    assert 14 <= r1 <= 18
