"""Classical transient dynamics: swing equations behind constant E' sources.

Machines are second-order classical models (constant EMF magnitude behind the
transient reactance) with a first-order droop governor, integrated with
fixed-step RK4.  The network is algebraic: base-case loads are embedded as
constant admittances at their power-flow voltage, machines enter as Norton
sources, and commanded EV load is a dynamic PQ injection solved by inner
fixed-point iteration at every integration stage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .powerflow import PowerFlowSolution
from .wscc9 import GridModel, build_ybus

INNER_TOL = 1e-8
INNER_MAX_ITER = 10
FREQ_FILTER_TAU = 0.05   # bus frequency estimate filter time constant, s


class StepError(RuntimeError):
    """Network solution failure inside a step (carries the last residual)."""

    def __init__(self, message: str, residual: float) -> None:
        super().__init__(f"{message} (residual {residual:.3e} pu)")
        self.residual = residual


@dataclass
class DynamicLoadParams:
    """Voltage/frequency sensitivity of the commanded EV load.

    ``alpha = 0`` and ``kpf = 0`` model constant power; ``alpha = 2`` would
    behave like constant impedance around the reference voltage.
    """
    alpha: float = 0.0
    kpf: float = 0.0


@dataclass
class DynamicState:
    t: float
    delta: np.ndarray        # rotor angle, rad
    omega: np.ndarray        # speed deviation, pu
    pm: np.ndarray           # governor output, machine-base pu
    pm_ref: np.ndarray       # dispatch reference, machine-base pu
    e_mag: np.ndarray        # internal EMF magnitude, pu
    active: np.ndarray       # machine in service
    v: np.ndarray            # last network solution, complex pu
    y_load: np.ndarray       # embedded constant-impedance loads, per bus
    v_ref: np.ndarray        # power-flow voltage magnitudes (load references)
    p_ev: np.ndarray         # commanded EV active power per bus, pu
    q_ev: np.ndarray         # commanded EV reactive power per bus, pu
    f_est: np.ndarray        # filtered bus frequency estimate, Hz
    theta_prev: np.ndarray   # previous bus angles for the estimate

    def machine_freq_hz(self, f0: float) -> np.ndarray:
        return f0 * (1.0 + self.omega)


class DynamicsEngine:
    """Owns the admittance structure and integrates one model instance."""

    def __init__(self, model: GridModel,
                 load_params: DynamicLoadParams | None = None) -> None:
        self.model = model
        self.load_params = load_params or DynamicLoadParams()
        self.n = len(model.buses)
        self.f0 = model.f_hz
        self.omega_s = 2.0 * np.pi * model.f_hz
        self.ybus = build_ybus(model)
        self.mach_idx = np.array([model.bus_index(m.bus) for m in model.machines])
        self.mva = np.array([m.mva for m in model.machines])
        self.xdp = np.array([m.xdp for m in model.machines])
        self.h = np.array([m.h_s for m in model.machines])
        self.damping = np.array([m.damping for m in model.machines])
        self.droop = np.array([m.droop for m in model.machines])
        self.t_gov = np.array([m.t_gov for m in model.machines])
        self.y_mach = 1.0 / (1j * self.xdp)
        self.base_ratio = model.s_base / self.mva   # system pu -> machine pu
        self._zinv: np.ndarray | None = None

    # ------------------------------------------------------------------ setup

    def initialize(self, sol: PowerFlowSolution) -> DynamicState:
        """Build an exact equilibrium state from a power-flow solution."""
        model = self.model
        v = sol.v.copy()
        i_m = np.conj(sol.s_machine / v[self.mach_idx])
        e = v[self.mach_idx] + 1j * self.xdp * i_m
        pe_sys = np.real(e * np.conj(i_m))
        pm = pe_sys * self.base_ratio

        y_load = np.zeros(self.n, dtype=complex)
        for ld in model.loads:
            i = model.bus_index(ld.bus)
            s_pu = complex(ld.p_mw, ld.q_mvar) / model.s_base
            y_load[i] += np.conj(s_pu) / abs(v[i]) ** 2

        state = DynamicState(
            t=0.0,
            delta=np.angle(e),
            omega=np.zeros(len(model.machines)),
            pm=pm.copy(),
            pm_ref=pm.copy(),
            e_mag=np.abs(e),
            active=np.ones(len(model.machines), dtype=bool),
            v=v,
            y_load=y_load,
            v_ref=np.abs(v),
            p_ev=np.zeros(self.n),
            q_ev=np.zeros(self.n),
            f_est=np.full(self.n, model.f_hz),
            theta_prev=np.angle(v),
        )
        self.rebuild(state)
        return state

    def rebuild(self, state: DynamicState) -> None:
        """Refactor the augmented network matrix (topology or load change)."""
        y = self.ybus.copy()
        y[np.arange(self.n), np.arange(self.n)] += state.y_load
        for k in np.flatnonzero(state.active):
            y[self.mach_idx[k], self.mach_idx[k]] += self.y_mach[k]
        self._zinv = np.linalg.inv(y)

    # ---------------------------------------------------------------- network

    def solve_network(self, state: DynamicState, delta: np.ndarray,
                      v_guess: np.ndarray) -> np.ndarray:
        """Algebraic network solution for given rotor angles.

        Dynamic PQ loads are folded in by fixed-point iteration to below
        ``INNER_TOL``; failure to converge (or voltage collapse at a loaded
        bus) raises :class:`StepError`.
        """
        i_src = np.zeros(self.n, dtype=complex)
        act = state.active
        np.add.at(
            i_src, self.mach_idx[act],
            state.e_mag[act] * np.exp(1j * delta[act]) * self.y_mach[act],
        )
        pq_mask = (state.p_ev != 0.0) | (state.q_ev != 0.0)
        if not pq_mask.any():
            return self._zinv @ i_src

        lp = self.load_params
        s_cmd = state.p_ev + 1j * state.q_ev
        freq_term = 1.0 + lp.kpf * (state.f_est - self.f0) / self.f0
        v = v_guess.copy()
        residual = np.inf
        for _ in range(INNER_MAX_ITER):
            vm = np.abs(v)
            if np.any(vm[pq_mask] < 1e-3):
                raise StepError("voltage collapse at a loaded bus", float(np.min(vm)))
            scale = np.ones(self.n)
            if lp.alpha != 0.0:
                scale = (vm / state.v_ref) ** lp.alpha
            s_eff = s_cmd * scale * freq_term
            i_pq = np.zeros(self.n, dtype=complex)
            i_pq[pq_mask] = -np.conj(s_eff[pq_mask] / v[pq_mask])
            v_new = self._zinv @ (i_src + i_pq)
            residual = float(np.max(np.abs(v_new - v)))
            v = v_new
            if residual < INNER_TOL:
                return v
        raise StepError("inner load iteration did not converge", residual)

    # ------------------------------------------------------------- derivatives

    def derivatives(self, state: DynamicState, delta: np.ndarray,
                    omega: np.ndarray, pm: np.ndarray,
                    v: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        act = state.active
        e = state.e_mag * np.exp(1j * delta)
        i_m = (e - v[self.mach_idx]) * self.y_mach
        pe_mach = np.real(e * np.conj(i_m)) * self.base_ratio

        d_delta = np.where(act, self.omega_s * omega, 0.0)
        d_omega = np.where(
            act, (pm - pe_mach - self.damping * omega) / (2.0 * self.h), 0.0)
        d_pm = np.where(
            act, (state.pm_ref - omega / self.droop - pm) / self.t_gov, 0.0)
        return d_delta, d_omega, d_pm

    # ------------------------------------------------------------------- step

    def step(self, state: DynamicState, dt: float) -> np.ndarray:
        """Advance one RK4 step in place; returns the end-of-step voltages."""
        d0, w0, p0 = state.delta, state.omega, state.pm
        v_guess = state.v

        v1 = self.solve_network(state, d0, v_guess)
        k1 = self.derivatives(state, d0, w0, p0, v1)

        d = d0 + 0.5 * dt * k1[0]
        w = w0 + 0.5 * dt * k1[1]
        p = p0 + 0.5 * dt * k1[2]
        v2 = self.solve_network(state, d, v1)
        k2 = self.derivatives(state, d, w, p, v2)

        d = d0 + 0.5 * dt * k2[0]
        w = w0 + 0.5 * dt * k2[1]
        p = p0 + 0.5 * dt * k2[2]
        v3 = self.solve_network(state, d, v2)
        k3 = self.derivatives(state, d, w, p, v3)

        d = d0 + dt * k3[0]
        w = w0 + dt * k3[1]
        p = p0 + dt * k3[2]
        v4 = self.solve_network(state, d, v3)
        k4 = self.derivatives(state, d, w, p, v4)

        sixth = dt / 6.0
        state.delta = d0 + sixth * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        state.omega = w0 + sixth * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        state.pm = p0 + sixth * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        state.t += dt

        v_final = self.solve_network(state, state.delta, v4)
        state.v = v_final

        # Filtered bus frequency estimate from the angle derivative.
        theta = np.angle(v_final)
        d_theta = np.mod(theta - state.theta_prev + np.pi, 2 * np.pi) - np.pi
        raw_f = self.f0 + d_theta / dt / (2.0 * np.pi)
        state.f_est += (dt / FREQ_FILTER_TAU) * (raw_f - state.f_est)
        state.theta_prev = theta
        return v_final

    # -------------------------------------------------------------- telemetry

    def bus_load_power(self, state: DynamicState) -> tuple[np.ndarray, np.ndarray]:
        """Actual drawn (P, Q) per bus in MW/Mvar: impedance + EV components."""
        vm2 = np.abs(state.v) ** 2
        s_z = vm2 * np.conj(state.y_load)
        lp = self.load_params
        scale = np.ones(self.n)
        if lp.alpha != 0.0:
            with np.errstate(divide="ignore", invalid="ignore"):
                scale = np.where(
                    state.v_ref > 0,
                    (np.sqrt(vm2) / state.v_ref) ** lp.alpha, 1.0)
        freq_term = 1.0 + lp.kpf * (state.f_est - self.f0) / self.f0
        s_ev = (state.p_ev + 1j * state.q_ev) * scale * freq_term
        s_total = (s_z + s_ev) * self.model.s_base
        return s_total.real, s_total.imag

    def ev_power_mw(self, state: DynamicState) -> np.ndarray:
        lp = self.load_params
        scale = np.ones(self.n)
        if lp.alpha != 0.0:
            scale = (np.abs(state.v) / state.v_ref) ** lp.alpha
        freq_term = 1.0 + lp.kpf * (state.f_est - self.f0) / self.f0
        return state.p_ev * scale * freq_term * self.model.s_base


def initialize_dynamics(model: GridModel, sol: PowerFlowSolution,
                        load_params: DynamicLoadParams | None = None,
                        ) -> tuple[DynamicsEngine, DynamicState]:
    """Convenience wrapper: build an engine and its equilibrium state."""
    engine = DynamicsEngine(model, load_params)
    return engine, engine.initialize(sol)
