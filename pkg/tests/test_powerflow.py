"""Power-flow validation against an independent brute-force solver.

The oracle below rebuilds the network from its own copy of the case table and
hands the raw mismatch equations to ``scipy.optimize.fsolve`` (numerical
Jacobian), sharing no code with the Newton solver under test.
"""

import dataclasses

import numpy as np
import pytest
from scipy.optimize import fsolve

from evcosim.powergrid import PowerFlowError, build_wscc9, solve_power_flow

# Frozen copy of the case table for the oracle: (from, to, r, x, b).
ORACLE_BRANCHES = [
    (1, 4, 0.0, 0.0576, 0.0),
    (4, 6, 0.017, 0.092, 0.158),
    (6, 9, 0.039, 0.17, 0.358),
    (3, 9, 0.0, 0.0586, 0.0),
    (8, 9, 0.0119, 0.1008, 0.209),
    (7, 8, 0.0085, 0.072, 0.149),
    (7, 2, 0.0, 0.0625, 0.0),
    (5, 7, 0.032, 0.161, 0.306),
    (4, 5, 0.01, 0.085, 0.176),
]
ORACLE_P_SPEC = {2: 1.63, 3: 0.85, 5: -1.25, 6: -0.90, 8: -1.00}
ORACLE_Q_SPEC = {5: -0.50, 6: -0.30, 8: -0.35}  # PQ buses 4..9; others zero
ORACLE_VSET = {1: 1.04, 2: 1.025, 3: 1.025}


def brute_force_solution() -> np.ndarray:
    """Solve the mismatch equations with fsolve; returns complex voltages."""
    y = np.zeros((9, 9), dtype=complex)
    for f, t, r, x, b in ORACLE_BRANCHES:
        ys = 1.0 / complex(r, x)
        y[f - 1, f - 1] += ys + 0.5j * b
        y[t - 1, t - 1] += ys + 0.5j * b
        y[f - 1, t - 1] -= ys
        y[t - 1, f - 1] -= ys

    pv = [2, 3]
    pq = [4, 5, 6, 7, 8, 9]

    def mismatch(z: np.ndarray) -> np.ndarray:
        ang = np.zeros(9)
        mag = np.ones(9)
        ang[1:] = z[:8]
        for i, bus in enumerate(pq):
            mag[bus - 1] = z[8 + i]
        for bus, vset in ORACLE_VSET.items():
            mag[bus - 1] = vset
        v = mag * np.exp(1j * ang)
        s = v * np.conj(y @ v)
        eqs = []
        for bus in pv + pq:
            eqs.append(s.real[bus - 1] - ORACLE_P_SPEC.get(bus, 0.0))
        for bus in pq:
            eqs.append(s.imag[bus - 1] - ORACLE_Q_SPEC.get(bus, 0.0))
        return np.array(eqs)

    z0 = np.concatenate([np.zeros(8), np.ones(6)])
    z, info, ier, msg = fsolve(mismatch, z0, full_output=True, xtol=1e-13)
    assert ier == 1, msg
    ang = np.zeros(9)
    mag = np.ones(9)
    ang[1:] = z[:8]
    for i, bus in enumerate(pq):
        mag[bus - 1] = z[8 + i]
    for bus, vset in ORACLE_VSET.items():
        mag[bus - 1] = vset
    return mag * np.exp(1j * ang)


def test_newton_matches_brute_force_solver():
    sol = solve_power_flow(build_wscc9())
    v_ref = brute_force_solution()
    assert np.max(np.abs(sol.v - v_ref)) < 1e-6


def test_converges_tightly():
    sol = solve_power_flow(build_wscc9())
    assert sol.max_mismatch < 1e-8
    assert sol.iterations <= 10
    assert np.all(sol.v_mag() > 0.95) and np.all(sol.v_mag() < 1.05)


def test_setpoints_held():
    sol = solve_power_flow(build_wscc9())
    assert sol.v_mag()[0] == pytest.approx(1.04, abs=1e-12)
    assert sol.v_mag()[1] == pytest.approx(1.025, abs=1e-12)
    assert sol.v_mag()[2] == pytest.approx(1.025, abs=1e-12)
    assert sol.v_ang()[0] == pytest.approx(0.0, abs=1e-12)
    # PV dispatch respected, slack covers load + losses
    assert sol.s_machine[1].real == pytest.approx(1.63, abs=1e-8)
    assert sol.s_machine[2].real == pytest.approx(0.85, abs=1e-8)
    total_gen = sol.s_machine.real.sum() * 100.0
    assert 315.0 < total_gen < 322.0  # 315 MW load + a few MW of losses


def test_no_load_case_is_nearly_flat():
    model = build_wscc9()
    machines = tuple(
        dataclasses.replace(m, p_set_mw=None if m.p_set_mw is None else 0.0)
        for m in model.machines
    )
    no_load = dataclasses.replace(model, loads=(), machines=machines)
    sol = solve_power_flow(no_load)
    # slack output is charging/loss balance only; unloaded lines show a
    # Ferranti rise of a few percent on the 230 kV ring
    assert abs(sol.s_machine[0].real) * 100.0 < 1.0
    assert np.all(sol.v_mag() > 1.0) and np.all(sol.v_mag() < 1.10)


def test_continuity_under_tiny_load_change():
    model = build_wscc9()
    sol_a = solve_power_flow(model)
    loads = tuple(
        dataclasses.replace(ld, p_mw=ld.p_mw * 1.0000001) for ld in model.loads
    )
    sol_b = solve_power_flow(dataclasses.replace(model, loads=loads))
    assert np.max(np.abs(sol_a.v - sol_b.v)) < 1e-5


def test_unsolvable_case_raises():
    model = build_wscc9()
    loads = tuple(dataclasses.replace(ld, p_mw=ld.p_mw * 40) for ld in model.loads)
    with pytest.raises(PowerFlowError):
        solve_power_flow(dataclasses.replace(model, loads=loads))
