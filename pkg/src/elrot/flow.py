"""Rotating incompressible flow state, right-hand side and initial data.

The momentum equation for the relative velocity u in the rotating frame,

    du/dt + u.grad(u) - nu*Lap(u) + grad(pi) + 2*Omega*zhat x u = 0,

is integrated in projected form: the pressure is never built, and every
gradient part (including the gradient piece of the Coriolis term) is
removed by the divergence-free projection. Diffusion is handled exactly
by the integrating factor in the stepper.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import spectral as sp
from .grid import Grid


class CflViolationError(RuntimeError):
    pass


@dataclass
class FlowState:
    """Velocity (spectral, divergence-free), time and physical parameters."""

    grid: Grid
    uh: np.ndarray          # (3, n, n, n//2+1) complex
    t: float
    omega_rate: float = 0.0
    nu: float = 0.0

    def u(self) -> np.ndarray:
        """Physical-space velocity."""
        return sp.to_physical(self.grid, self.uh)

    def with_time(self, t: float) -> "FlowState":
        return replace(self, t=t)


def coriolis(u: np.ndarray, omega_rate: float) -> np.ndarray:
    """The rotation term 2*Omega*zhat x u = 2*Omega*(-u2, u1, 0), pointwise."""
    out = np.empty_like(u)
    out[0] = -2.0 * omega_rate * u[1]
    out[1] = 2.0 * omega_rate * u[0]
    out[2] = 0.0
    return out


def rhs(state: FlowState) -> np.ndarray:
    """Projected, dealiased tendency of u (diffusion excluded; see stepper).

    Returns the spectral field of P[-u.grad(u) - 2*Omega*zhat x u]. The
    advection enters in rotational form (its gradient part is projected
    out anyway), and the k=0 mode is frozen so a uniform mean flow stays
    constant (carried by a linear pressure gauge).
    """
    from .timestep import system_tendency

    return system_tendency(
        state.grid, state.uh, None, None, None, state.omega_rate, state.nu
    ).nu_h


def cfl_dt(state: FlowState, dt_max: float = 0.1, safety: float = 0.5) -> float:
    """Advective CFL limit, capped by 0.1/Omega and dt_max."""
    g = state.grid
    umax = sp.field_max_norm(state.u())
    dt = safety * g.dx / max(umax, 1e-12)
    if state.omega_rate > 0:
        dt = min(dt, 0.1 / state.omega_rate)
    return min(dt, dt_max)


def vorticity(state: FlowState) -> np.ndarray:
    """omega = curl(u), physical."""
    return sp.to_physical(state.grid, sp.curl(state.grid, state.uh))


def grad_u_max(state: FlowState) -> float:
    """Max over the grid of the Frobenius norm of grad(u)."""
    return sp.tensor_max_frobenius(sp.grad_vector(state.grid, state.u()))


def resolution_warning(state: FlowState, threshold: float = 1e-6) -> bool:
    """True when the top third of the kept band holds more energy than threshold."""
    return sp.spectral_energy_tail_fraction(state.grid, state.uh) > threshold


# ---------------------------------------------------------------------------
# initial data


def taylor_green(grid: Grid, amplitude: float = 1.0) -> np.ndarray:
    """Classical 3-D Taylor-Green vortex (u3 = 0 at t=0)."""
    x1, x2, x3 = grid.mesh()
    u = grid.zeros_vec()
    u[0] = amplitude * np.cos(x1) * np.sin(x2) * np.sin(x3)
    u[1] = -amplitude * np.sin(x1) * np.cos(x2) * np.sin(x3)
    return u


def eigenflow_2d(grid: Grid, amplitude: float = 1.0) -> np.ndarray:
    """Steady 2-D flow u = perp-grad(psi), psi = A sin(x1) sin(x2).

    psi is a Laplacian eigenfunction, so the advection term is a pure
    gradient and the flow is steady under any rotation rate.
    """
    x1, x2, _ = grid.mesh()
    u = grid.zeros_vec()
    u[0] = -amplitude * np.sin(x1) * np.cos(x2)
    u[1] = amplitude * np.cos(x1) * np.sin(x2)
    return u


def random_solenoidal(grid: Grid, amplitude: float = 1.0, seed: int = 0) -> np.ndarray:
    """Smooth random divergence-free field, low-wavenumber band, unit-normalized."""
    rng = np.random.default_rng(seed)
    n = grid.n
    m = np.abs(np.fft.fftfreq(n, d=1.0 / n))
    mh = np.arange(n // 2 + 1, dtype=float)
    mmax = np.maximum(np.maximum(m[:, None, None], m[None, :, None]), mh[None, None, :])
    band = (mmax >= 1) & (mmax <= 3)
    uh = np.zeros((3,) + grid.spectral_shape, complex)
    for c in range(3):
        uh[c][band] = rng.standard_normal(band.sum()) + 1j * rng.standard_normal(band.sum())
    uh = sp.leray_project(grid, uh)
    u = sp.to_physical(grid, uh)
    mx = sp.field_max_norm(u)
    return u * (amplitude / mx) if mx > 0 else u


INITIAL_CONDITIONS = {
    "taylor_green": taylor_green,
    "eigenflow_2d": eigenflow_2d,
    "zero": lambda grid, amplitude=1.0: grid.zeros_vec(),
}


def make_flow(
    grid: Grid,
    ic: str,
    amplitude: float = 1.0,
    omega_rate: float = 0.0,
    nu: float = 0.0,
    seed: int = 0,
    t: float = 0.0,
) -> FlowState:
    """Build a FlowState from a named initial condition (projected, dealiased)."""
    if ic == "random":
        u = random_solenoidal(grid, amplitude, seed)
    elif ic in INITIAL_CONDITIONS:
        u = INITIAL_CONDITIONS[ic](grid, amplitude=amplitude)
    else:
        raise ValueError(f"unknown initial condition '{ic}'")
    uh = sp.leray_project(grid, sp.dealias(grid, sp.to_spectral(grid, u)))
    return FlowState(grid=grid, uh=uh, t=t, omega_rate=omega_rate, nu=nu)
