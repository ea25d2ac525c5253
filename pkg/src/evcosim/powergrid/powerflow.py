"""Newton-Raphson power flow in polar coordinates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .wscc9 import GridModel, build_ybus


class PowerFlowError(RuntimeError):
    """Raised when the iteration fails to reach the mismatch tolerance."""


@dataclass(frozen=True)
class PowerFlowSolution:
    v: np.ndarray                # complex bus voltages, pu
    s_machine: np.ndarray        # complex machine outputs (per machine), pu
    iterations: int
    max_mismatch: float

    def v_mag(self) -> np.ndarray:
        return np.abs(self.v)

    def v_ang(self) -> np.ndarray:
        return np.angle(self.v)


def _injections(model: GridModel) -> tuple[np.ndarray, np.ndarray]:
    """Specified net P and Q injections, pu (generation minus load)."""
    n = len(model.buses)
    p = np.zeros(n)
    q = np.zeros(n)
    for m in model.machines:
        if m.p_set_mw is not None:
            p[model.bus_index(m.bus)] += m.p_set_mw / model.s_base
    for ld in model.loads:
        i = model.bus_index(ld.bus)
        p[i] -= ld.p_mw / model.s_base
        q[i] -= ld.q_mvar / model.s_base
    return p, q


def solve_power_flow(
    model: GridModel,
    tol: float = 1e-8,
    max_iter: int = 50,
) -> PowerFlowSolution:
    """Solve the steady-state network equations.

    Mismatch is driven below ``tol`` (pu) on every P equation (non-slack
    buses) and Q equation (PQ buses); exceeding ``max_iter`` raises
    :class:`PowerFlowError`.
    """
    y = build_ybus(model)
    g, b = y.real, y.imag
    n = len(model.buses)

    kinds = [bus.kind for bus in model.buses]
    slack = [i for i, k in enumerate(kinds) if k == "slack"]
    pv = [i for i, k in enumerate(kinds) if k == "pv"]
    pq = [i for i, k in enumerate(kinds) if k == "pq"]
    if len(slack) != 1:
        raise ValueError("exactly one slack bus required")
    non_slack = sorted(pv + pq)

    vm = np.ones(n)
    va = np.zeros(n)
    for i, bus in enumerate(model.buses):
        if bus.v_set is not None:
            vm[i] = bus.v_set

    p_spec, q_spec = _injections(model)

    def calc_pq(vm: np.ndarray, va: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        v = vm * np.exp(1j * va)
        s = v * np.conj(y @ v)
        return s.real, s.imag

    iterations = 0
    for iterations in range(1, max_iter + 1):
        p_calc, q_calc = calc_pq(vm, va)
        dp = p_spec[non_slack] - p_calc[non_slack]
        dq = q_spec[pq] - q_calc[pq]
        mismatch = np.concatenate([dp, dq])
        max_mis = float(np.max(np.abs(mismatch))) if mismatch.size else 0.0
        if max_mis < tol:
            break

        # Polar Jacobian blocks (standard H/N/M/L formulas).
        ang = va[:, None] - va[None, :]
        cos, sin = np.cos(ang), np.sin(ang)
        vv = vm[:, None] * vm[None, :]
        h = vv * (g * sin - b * cos)
        np.fill_diagonal(h, -q_calc - b.diagonal() * vm**2)
        nmat = vm[:, None] * (g * cos + b * sin)
        np.fill_diagonal(nmat, p_calc / vm + g.diagonal() * vm)
        m = -vv * (g * cos + b * sin)
        np.fill_diagonal(m, p_calc - g.diagonal() * vm**2)
        lmat = vm[:, None] * (g * sin - b * cos)
        np.fill_diagonal(lmat, q_calc / vm - b.diagonal() * vm)

        jac = np.block([
            [h[np.ix_(non_slack, non_slack)], nmat[np.ix_(non_slack, pq)]],
            [m[np.ix_(pq, non_slack)], lmat[np.ix_(pq, pq)]],
        ])
        dx = np.linalg.solve(jac, mismatch)
        va[non_slack] += dx[: len(non_slack)]
        vm[pq] += dx[len(non_slack):]
    else:
        raise PowerFlowError(
            f"no convergence after {max_iter} iterations "
            f"(max mismatch {max_mis:.3e} pu)"
        )

    v = vm * np.exp(1j * va)
    s_inj = v * np.conj(y @ v)
    # Machine output = net injection plus the local load it must cover.
    s_load = np.zeros(n, dtype=complex)
    for ld in model.loads:
        s_load[model.bus_index(ld.bus)] += complex(ld.p_mw, ld.q_mvar) / model.s_base
    s_machine = np.array(
        [s_inj[model.bus_index(m.bus)] + s_load[model.bus_index(m.bus)]
         for m in model.machines]
    )
    return PowerFlowSolution(v=v, s_machine=s_machine,
                             iterations=iterations, max_mismatch=max_mis)
