"""Coupled 4th-order step for velocity, displacement, virtual velocity, tracers.

One classical RK4 pass advances the whole system so every equation sees
the velocity at the proper stage times. Diffusion (the -nu*Lap part of
u, ell and v) is removed with the exact integrating factor exp(-nu*k^2*dt);
with nu=0 the scheme reduces to plain RK4. Tracer positions are pushed
with the same stages using spline sampling of the stage velocities.

Per stage, everything that needs an inverse transform is packed into one
batched call: u, curl(u) for the rotational-form advection, and the
derivative stacks of ell and v. The Coriolis term is applied directly in
spectral space (it is linear), with its k=0 mode dropped so a uniform
mean flow stays put.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import spectral as sp
from .flow import FlowState
from .grid import Grid


class NearSingularError(RuntimeError):
    """det(grad A) dropped below the guard; the caller should reset."""


@dataclass
class StageWork:
    """Stage tendencies for whichever components are being advanced."""

    nu_h: np.ndarray | None = None
    nl_h: np.ndarray | None = None
    nv_h: np.ndarray | None = None
    dxdt: np.ndarray | None = None


def jacobian_and_inverse(gl: np.ndarray, det_min: float = 0.0):
    """J = I + grad(ell), its determinant and pointwise closed-form inverse.

    gl[a, j] = d_j ell_a. Raises NearSingularError if det <= det_min anywhere
    (pass det_min=0 to only guard against outright sign loss).
    """
    J = gl.copy()
    J[0, 0] += 1.0
    J[1, 1] += 1.0
    J[2, 2] += 1.0
    cof = np.empty_like(J)  # cof[a, j] = cofactor of J[a, j]
    for a in range(3):
        a1, a2 = (a + 1) % 3, (a + 2) % 3
        for j in range(3):
            j1, j2 = (j + 1) % 3, (j + 2) % 3
            cof[a, j] = J[a1, j1] * J[a2, j2] - J[a1, j2] * J[a2, j1]
    det = J[0, 0] * cof[0, 0] + J[0, 1] * cof[0, 1] + J[0, 2] * cof[0, 2]
    if det.min() <= det_min:
        raise NearSingularError(
            f"min det(grad A) = {det.min():.3g} <= guard {det_min:.3g}"
        )
    Jinv = np.transpose(cof, (1, 0) + tuple(range(2, cof.ndim))) / det  # adj/det
    return J, det, Jinv


def displacement_hessian(grid: Grid, lh: np.ndarray) -> np.ndarray:
    """Second derivatives hess[a, j, k] = d_j d_k ell_a (= d_j d_k A_a), physical."""
    ks = (grid.kx, grid.ky, grid.kz)
    hh = np.empty((3, 6) + grid.spectral_shape, complex)
    idx = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]
    for a in range(3):
        for m, (j, k) in enumerate(idx):
            hh[a, m] = -ks[j] * ks[k] * lh[a]
    hp = sp.to_physical(grid, hh)
    hess = np.empty((3, 3, 3) + grid.shape)
    for a in range(3):
        for m, (j, k) in enumerate(idx):
            hess[a, j, k] = hp[a, m]
            hess[a, k, j] = hp[a, m]
    return hess


def connection_coefficients(
    grid: Grid, lh: np.ndarray, gl: np.ndarray, det_min: float = 0.0
):
    """C[a, j, b] = Jinv[k, b] * d_j d_k A_a, plus J, det, Jinv."""
    J, det, Jinv = jacobian_and_inverse(gl, det_min)
    hess = displacement_hessian(grid, lh)
    C = np.einsum("kb...,ajk...->ajb...", Jinv, hess)
    return J, det, Jinv, C


def virtual_velocity_source(
    grid: Grid, lh: np.ndarray, gl: np.ndarray, gv: np.ndarray,
    omega_rate: float, nu: float, det_min: float = 0.0,
) -> np.ndarray:
    """Viscous source of the virtual-velocity equation (physical space).

    S_b = 2*nu*C[a,j,b]*d_j v_a + 2*Omega*nu*det(zhat; d_j A; C[:,j,b]).
    Vanishes identically when grad(ell) = 0 or nu = 0.
    """
    J, _, _, C = connection_coefficients(grid, lh, gl, det_min)
    S = 2.0 * nu * np.einsum("ajb...,aj...->b...", C, gv)
    if omega_rate != 0.0:
        # det(zhat; a; b) = a1*b2 - a2*b1 with columns a = d_j A, b = C[:, j, b]
        S += (2.0 * omega_rate * nu) * (
            np.einsum("j...,jb...->b...", J[0], C[1])
            - np.einsum("j...,jb...->b...", J[1], C[0])
        )
    return S


def system_tendency(
    grid: Grid,
    uh: np.ndarray,
    lh: np.ndarray | None,
    vh: np.ndarray | None,
    trx: np.ndarray | None,
    omega_rate: float,
    nu: float,
    det_min: float = 0.0,
) -> StageWork:
    """Dealiased, projected tendencies of every active component at one stage."""
    if vh is not None and lh is None:
        raise ValueError("virtual velocity needs the displacement")
    nz = grid.spectral_shape

    # one batched inverse transform: u, omega, then 3x3 stacks for ell and v
    nfields = 6 + (9 if lh is not None else 0) + (9 if vh is not None else 0)
    stack = np.empty((nfields,) + nz, complex)
    stack[0:3] = uh
    stack[3:6] = sp.curl_spectral(grid, uh)
    pos = 6
    if lh is not None:
        stack[pos:pos + 9] = sp.grad_vector_spectral(grid, lh).reshape((9,) + nz)
        pos += 9
    if vh is not None:
        stack[pos:pos + 9] = sp.grad_vector_spectral(grid, vh).reshape((9,) + nz)
    phys = sp.to_physical(grid, stack)
    u, om = phys[0:3], phys[3:6]
    pos = 6
    gl = gv = None
    if lh is not None:
        gl = phys[pos:pos + 9].reshape((3, 3) + grid.shape)
        pos += 9
    if vh is not None:
        gv = phys[pos:pos + 9].reshape((3, 3) + grid.shape)

    # physical-space products, forward-transformed together
    nprod = 3 + (3 if lh is not None else 0) + (3 if vh is not None else 0)
    prod = np.empty((nprod,) + grid.shape)
    # rotational form: -(omega x u); the grad(|u|^2/2) part dies under projection
    prod[0] = -(om[1] * u[2] - om[2] * u[1])
    prod[1] = -(om[2] * u[0] - om[0] * u[2])
    prod[2] = -(om[0] * u[1] - om[1] * u[0])
    pos = 3
    if lh is not None:
        for i in range(3):
            prod[pos + i] = -(u[0] * gl[i, 0] + u[1] * gl[i, 1] + u[2] * gl[i, 2])
        pos += 3
    if vh is not None:
        for i in range(3):
            prod[pos + i] = -(u[0] * gv[i, 0] + u[1] * gv[i, 1] + u[2] * gv[i, 2])
        if nu > 0.0:
            prod[pos:pos + 3] += virtual_velocity_source(
                grid, lh, gl, gv, omega_rate, nu, det_min
            )
    ph = sp.dealias(grid, sp.to_spectral(grid, prod))

    work = StageWork()
    nuh = ph[0:3].copy()
    if omega_rate != 0.0:
        two_om = 2.0 * omega_rate
        cor0 = -two_om * uh[1]
        cor1 = two_om * uh[0]
        cor0[0, 0, 0] = 0.0  # uniform mean flow carried by the pressure gauge
        cor1[0, 0, 0] = 0.0
        nuh[0] -= cor0
        nuh[1] -= cor1
    nuh = sp.leray_project(grid, nuh)
    nuh[:, 0, 0, 0] = 0.0  # advection has zero mean; keep it exact
    work.nu_h = nuh
    pos = 3
    if lh is not None:
        work.nl_h = ph[pos:pos + 3] - uh
        pos += 3
    if vh is not None:
        work.nv_h = ph[pos:pos + 3]
    if trx is not None:
        work.dxdt = sp.FieldSampler(grid, u, order=3)(trx)
    return work


def advance(
    grid: Grid,
    uh: np.ndarray,
    dt: float,
    omega_rate: float,
    nu: float,
    lh: np.ndarray | None = None,
    vh: np.ndarray | None = None,
    trx: np.ndarray | None = None,
    det_min: float = 0.0,
):
    """One RK4 / integrating-factor step of the coupled system.

    Returns (uh, lh, vh, trx) with None passed through for absent parts.
    """
    if nu > 0.0:
        E = np.exp(-nu * grid.k2 * dt)
        E2 = np.exp(-nu * grid.k2 * (0.5 * dt))
    else:
        E = E2 = 1.0

    def tend(u_, l_, v_, x_):
        return system_tendency(grid, u_, l_, v_, x_, omega_rate, nu, det_min)

    k1 = tend(uh, lh, vh, trx)

    u_a = E2 * (uh + (0.5 * dt) * k1.nu_h)
    l_a = None if lh is None else E2 * (lh + (0.5 * dt) * k1.nl_h)
    v_a = None if vh is None else E2 * (vh + (0.5 * dt) * k1.nv_h)
    x_a = None if trx is None else trx + (0.5 * dt) * k1.dxdt
    k2 = tend(u_a, l_a, v_a, x_a)

    u_b = E2 * uh + (0.5 * dt) * k2.nu_h
    l_b = None if lh is None else E2 * lh + (0.5 * dt) * k2.nl_h
    v_b = None if vh is None else E2 * vh + (0.5 * dt) * k2.nv_h
    x_b = None if trx is None else trx + (0.5 * dt) * k2.dxdt
    k3 = tend(u_b, l_b, v_b, x_b)

    u_c = E * uh + dt * (E2 * k3.nu_h)
    l_c = None if lh is None else E * lh + dt * (E2 * k3.nl_h)
    v_c = None if vh is None else E * vh + dt * (E2 * k3.nv_h)
    x_c = None if trx is None else trx + dt * k3.dxdt
    k4 = tend(u_c, l_c, v_c, x_c)

    w = dt / 6.0
    uh1 = E * uh + w * (E * k1.nu_h + 2.0 * E2 * (k2.nu_h + k3.nu_h) + k4.nu_h)
    uh1 = sp.leray_project(grid, uh1)
    lh1 = None
    if lh is not None:
        lh1 = E * lh + w * (E * k1.nl_h + 2.0 * E2 * (k2.nl_h + k3.nl_h) + k4.nl_h)
    vh1 = None
    if vh is not None:
        vh1 = E * vh + w * (E * k1.nv_h + 2.0 * E2 * (k2.nv_h + k3.nv_h) + k4.nv_h)
    tx1 = None
    if trx is not None:
        tx1 = trx + w * (k1.dxdt + 2.0 * (k2.dxdt + k3.dxdt) + k4.dxdt)
    return uh1, lh1, vh1, tx1


def step_flow(state: FlowState, dt: float) -> FlowState:
    """Advance the flow alone by dt (4th order; diffusion exact).

    Rejects steps beyond the advective/rotational CFL limit.
    """
    from .flow import CflViolationError, cfl_dt

    limit = cfl_dt(state, dt_max=np.inf)
    if dt > limit * (1.0 + 1e-9):
        raise CflViolationError(f"dt={dt:.3g} exceeds CFL limit {limit:.3g}")
    uh1, _, _, _ = advance(state.grid, state.uh, dt, state.omega_rate, state.nu)
    if not np.isfinite(uh1.view(float)).all():
        raise FloatingPointError("non-finite velocity after step")
    return FlowState(
        grid=state.grid, uh=uh1, t=state.t + dt,
        omega_rate=state.omega_rate, nu=state.nu,
    )
