"""Structural identities tying velocity, vorticity and the label map.

The total vorticity omega + 2*Omega*zhat is transported as a vector by
the trajectories of the relative velocity: it equals the cofactor action
of grad(A) on zeta + 2*Omega*zhat, where zeta is the virtual vorticity
(the Cauchy invariant omega0(A(x,t)) when nu = 0). Splitting off the
rotation part gives

    omega = cauchy_apply(grad A, zeta) + 2*Omega*rotation_curl_term(ell),

and the rotation term factors through the vertical displacement gradient:

    rotation_curl_term + dz_factor_matrix(grad ell) @ dz_ell
        = (0, 0, det(grad A) - 1 - det(grad ell))        (exactly).

The right side is the volume defect plus a cubic remainder; for exactly
incompressible transport it reduces to -det(grad ell). Everything here
is pointwise algebra over snapshots; residuals quantify how well the
discrete evolution honors the exact relations.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import spectral as sp
from .flow import FlowState, vorticity
from .maps import ELState, grad_A
from .timestep import advance, jacobian_and_inverse

ZHAT = np.array([0.0, 0.0, 1.0])


def cauchy_apply(jac: np.ndarray, w) -> np.ndarray:
    """Cofactor action: out_i = (col_{i+1} x col_{i+2}) . w (cyclic).

    jac[a, j] holds the columns col_j = d_j A; for the identity matrix this
    is the identity map, and in general equals det(jac) * jac^{-1} w. Linear
    in w. w may be a vector field (3, ...) or a constant 3-vector.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim == 1:
        w = w.reshape((3,) + (1,) * (jac.ndim - 2))
    out = np.empty(np.broadcast_shapes(jac[:, 0].shape, w.shape))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        cross = np.cross(jac[:, j], jac[:, k], axis=0)
        out[i] = np.sum(cross * w, axis=0)
    return out


def virtual_vorticity(el: ELState, det_min: float = 0.0) -> np.ndarray:
    """zeta = curl of v taken in label coordinates: eps_{abc} dv_c/dA_b.

    Equals curl(u) at a reset instant and omega0(A(x,t)) along inviscid
    evolution. Requires the virtual velocity and an invertible grad(A).
    """
    if el.vh is None:
        raise ValueError("virtual vorticity needs the virtual velocity")
    g = el.grid
    gl = el.grad_ell()
    _, _, Jinv = jacobian_and_inverse(gl, det_min)
    gv = sp.to_physical(g, sp.grad_vector_spectral(g, el.vh))
    # W[b, c] = dv_c/dA_b = Jinv[j, b] * d_j v_c
    W = np.einsum("jb...,cj...->bc...", Jinv, gv)
    zeta = np.empty((3,) + g.shape)
    zeta[0] = W[1, 2] - W[2, 1]
    zeta[1] = W[2, 0] - W[0, 2]
    zeta[2] = W[0, 1] - W[1, 0]
    return zeta


def reconstruct_vorticity(
    el: ELState, omega_rate: float, zeta: np.ndarray | None = None
) -> np.ndarray:
    """Vorticity implied by the transport identity for the total vorticity.

    omega_rec = cauchy_apply(grad A, zeta + 2*Omega*zhat) - 2*Omega*zhat.
    """
    if zeta is None:
        zeta = virtual_vorticity(el)
    J = grad_A(el)
    w = zeta.copy()
    w[2] += 2.0 * omega_rate
    rec = cauchy_apply(J, w)
    rec[2] -= 2.0 * omega_rate
    return rec


def weber_velocity(el: ELState, omega_rate: float) -> np.ndarray:
    """Divergence-free reconstruction of u from (grad A, v) and rotation.

    w_i = (d_i A_a) v_a + Omega * [2 (zhat x ell)_i + ell_1 d_i ell_2
    - ell_2 d_i ell_1], projected. The rotation bracket is the periodic
    displacement form of Omega * {(zhat; A; d_i A) - (zhat; x; e_i)}:
    the unbounded pieces are pure gradients absorbed by the projection.
    Returns the physical projected field.
    """
    if el.vh is None:
        raise ValueError("weber velocity needs the virtual velocity")
    g = el.grid
    gl = el.grad_ell()
    v = sp.to_physical(g, el.vh)
    w = np.empty((3,) + g.shape)
    for i in range(3):
        w[i] = v[i] + gl[0, i] * v[0] + gl[1, i] * v[1] + gl[2, i] * v[2]
    if omega_rate != 0.0:
        ell = el.ell()
        gl1, gl2 = gl[0], gl[1]  # gradients of ell_1, ell_2
        w[0] += omega_rate * (-2.0 * ell[1] + ell[0] * gl2[0] - ell[1] * gl1[0])
        w[1] += omega_rate * (2.0 * ell[0] + ell[0] * gl2[1] - ell[1] * gl1[1])
        w[2] += omega_rate * (ell[0] * gl2[2] - ell[1] * gl1[2])
    return sp.to_physical(g, sp.leray_project(g, sp.to_spectral(g, w)))


# ---------------------------------------------------------------------------
# displacement-gradient algebra (pointwise in grad ell)


def rotation_curl_term(gl: np.ndarray) -> np.ndarray:
    """Curl contribution of the rotation bracket, written in grad(ell).

    Component form: (-d3 l1 + (d2 l1)(d3 l2) - (d3 l1)(d2 l2),
                     -d3 l2 + (d3 l1)(d1 l2) - (d1 l1)(d3 l2),
                     -d3 l3 + div(l) + (d1 l1)(d2 l2) - (d2 l1)(d1 l2)).
    Equals cauchy_apply(I + gl, zhat) - zhat for arbitrary gl.
    """
    out = np.empty((3,) + gl.shape[2:])
    out[0] = -gl[0, 2] + gl[0, 1] * gl[1, 2] - gl[0, 2] * gl[1, 1]
    out[1] = -gl[1, 2] + gl[0, 2] * gl[1, 0] - gl[0, 0] * gl[1, 2]
    div = gl[0, 0] + gl[1, 1] + gl[2, 2]
    out[2] = -gl[2, 2] + div + gl[0, 0] * gl[1, 1] - gl[0, 1] * gl[1, 0]
    return out


def dz_factor_matrix(gl: np.ndarray) -> np.ndarray:
    """Matrix M with rotation_curl_term = -M @ dz_ell (up to the exact defect)."""
    shape = gl.shape[2:]
    M = np.zeros((3, 3) + shape)
    M[0, 0] = 1.0 + gl[1, 1]
    M[0, 1] = -gl[0, 1]
    M[1, 0] = -gl[1, 0]
    M[1, 1] = 1.0 + gl[0, 0]
    M[2, 0] = -gl[2, 0]
    M[2, 1] = -gl[2, 1]
    M[2, 2] = 1.0 + gl[0, 0] + gl[1, 1]
    return M


def horizontal_diagonalizer(gl: np.ndarray) -> np.ndarray:
    """Matrix N whose product with M makes the horizontal block diagonal."""
    shape = gl.shape[2:]
    N = np.zeros((3, 3) + shape)
    N[0, 0] = 1.0 + gl[0, 0]
    N[0, 1] = gl[0, 1]
    N[1, 0] = gl[1, 0]
    N[1, 1] = 1.0 + gl[1, 1]
    N[2, 2] = 1.0
    return N


def horizontal_block_det(gl: np.ndarray) -> np.ndarray:
    """D2 = det of the (1,2) block of grad A = (1+d1l1)(1+d2l2) - (d1l2)(d2l1)."""
    return (1.0 + gl[0, 0]) * (1.0 + gl[1, 1]) - gl[0, 1] * gl[1, 0]


def horizontal_trace(gl: np.ndarray) -> np.ndarray:
    """t2 = d1 l1 + d2 l2."""
    return gl[0, 0] + gl[1, 1]


def horizontal_minor(gl: np.ndarray) -> np.ndarray:
    """d2 = (d1 l1)(d2 l2) - (d1 l2)(d2 l1)."""
    return gl[0, 0] * gl[1, 1] - gl[0, 1] * gl[1, 0]


def gradient_det(gl: np.ndarray) -> np.ndarray:
    """det(grad ell), the cubic remainder of the volume expansion."""
    return (
        gl[0, 0] * (gl[1, 1] * gl[2, 2] - gl[1, 2] * gl[2, 1])
        - gl[0, 1] * (gl[1, 0] * gl[2, 2] - gl[1, 2] * gl[2, 0])
        + gl[0, 2] * (gl[1, 0] * gl[2, 1] - gl[1, 1] * gl[2, 0])
    )


def dz_ell(gl: np.ndarray) -> np.ndarray:
    """Vertical derivative of the displacement, (d3 l1, d3 l2, d3 l3)."""
    return gl[:, 2]


def rotation_scaled_mismatch(
    el: ELState, flow: FlowState, zeta: np.ndarray | None = None
) -> np.ndarray:
    """s = (1/2 Omega) N(grad ell) {cauchy_apply(grad A, zeta) - omega}.

    The small vector whose components carry the certified vertical-gradient
    bounds: s_1 = D2 d3l1, s_2 = D2 d3l2 and the s_3 relation, up to the
    transport residual. Requires Omega > 0.
    """
    if flow.omega_rate <= 0.0:
        raise ValueError("the scaled mismatch needs a positive rotation rate")
    if zeta is None:
        zeta = virtual_vorticity(el)
    gl = el.grad_ell()
    J = gl.copy()
    J[0, 0] += 1.0
    J[1, 1] += 1.0
    J[2, 2] += 1.0
    mism = cauchy_apply(J, zeta) - vorticity(flow)
    N = horizontal_diagonalizer(gl)
    return np.einsum("ab...,b...->a...", N, mism) / (2.0 * flow.omega_rate)


def factorization_residual(el: ELState) -> np.ndarray:
    """Pointwise norm of the exact factorization defect (zero up to roundoff).

    | rotation_curl_term(gl) + M(gl) dz_ell - (0, 0, det(grad A) - 1
      - det(gl)) | evaluated on the current displacement. Holds for any
    smooth ell, incompressible or not.
    """
    gl = el.grad_ell()
    R = rotation_curl_term(gl)
    M = dz_factor_matrix(gl)
    dz = dz_ell(gl)
    lhs = R + np.einsum("ab...,b...->a...", M, dz)
    detA = det_from_gl(gl)
    lhs[2] -= (detA - 1.0) - gradient_det(gl)
    return np.sqrt(np.sum(lhs * lhs, axis=0))


def det_from_gl(gl: np.ndarray) -> np.ndarray:
    """det(I + grad ell) without forming the Jacobian."""
    J = gl.copy()
    J[0, 0] += 1.0
    J[1, 1] += 1.0
    J[2, 2] += 1.0
    return (
        J[0, 0] * (J[1, 1] * J[2, 2] - J[1, 2] * J[2, 1])
        - J[0, 1] * (J[1, 0] * J[2, 2] - J[1, 2] * J[2, 0])
        + J[0, 2] * (J[1, 0] * J[2, 1] - J[1, 1] * J[2, 0])
    )


@dataclass
class BlockDetRelation:
    """The horizontal block determinant and its vorticity-side expression."""

    d2: np.ndarray                 # D2(grad ell) field
    t2: np.ndarray
    minor2: np.ndarray
    vorticity_side: np.ndarray     # 1 + (omega_3 - (d1A; d2A; zeta)) / (2 Omega)
    rel_residual: float            # sup |d2 - vorticity_side| / sup |d2|
    eqobv_residual: float          # sup |d2 - 1 - t2 - minor2| (polynomial identity)


def block_det_relation(
    el: ELState, flow: FlowState, zeta: np.ndarray | None = None
) -> BlockDetRelation:
    """Check D2 = 1 + (omega_3 - det(d1 A, d2 A, zeta)) / (2 Omega)."""
    if flow.omega_rate <= 0.0:
        raise ValueError("the block-determinant relation needs Omega > 0")
    if zeta is None:
        zeta = virtual_vorticity(el)
    gl = el.grad_ell()
    d2 = horizontal_block_det(gl)
    t2 = horizontal_trace(gl)
    m2 = horizontal_minor(gl)
    J = grad_A(el)
    om3 = vorticity(flow)[2]
    triple = np.sum(np.cross(J[:, 0], J[:, 1], axis=0) * zeta, axis=0)
    vort_side = 1.0 + (om3 - triple) / (2.0 * flow.omega_rate)
    rel = float(np.max(np.abs(d2 - vort_side)) / max(np.max(np.abs(d2)), 1e-300))
    eqobv = float(np.max(np.abs(d2 - 1.0 - t2 - m2)))
    return BlockDetRelation(d2, t2, m2, vort_side, rel, eqobv)


def step_virtual_velocity(
    el: ELState, flow: FlowState, dt: float, det_min: float = 0.0
) -> ELState:
    """Advance v by one 4th-order step (velocity and displacement staged).

    For nu = 0 the source vanishes and v is purely advected; with
    diffusion the connection-coefficient source keeps the reconstruction
    identities alive. The stored displacement is left untouched (the
    caller advances it through the same stages).
    """
    if el.vh is None:
        raise ValueError("no virtual velocity to step")
    _, _, vh1, _ = advance(
        flow.grid, flow.uh, dt, flow.omega_rate, flow.nu,
        lh=el.lh, vh=el.vh, det_min=det_min,
    )
    if not np.isfinite(vh1.view(float)).all():
        raise FloatingPointError("non-finite virtual velocity after step")
    return replace(el, vh=vh1)


@dataclass
class IdentityResiduals:
    """Relative sup-norm defects of the structural identities at one instant."""

    time: float
    weber_rel: float
    cauchy_rel: float
    factorization_abs: float
    d2_rel: float


def identity_residuals(el: ELState, flow: FlowState) -> IdentityResiduals:
    """Evaluate every identity residual on one (flow, el) snapshot."""
    u = flow.u()
    om = vorticity(flow)
    unorm = sp.field_max_norm(u)
    omnorm = sp.field_max_norm(om)

    zeta = virtual_vorticity(el) if el.vh is not None else None

    if el.vh is not None and unorm > 0:
        w = weber_velocity(el, flow.omega_rate)
        weber = sp.field_max_norm(w - u) / unorm
    else:
        weber = 0.0

    if zeta is not None and omnorm > 0:
        rec = reconstruct_vorticity(el, flow.omega_rate, zeta)
        cauchy = sp.field_max_norm(rec - om) / omnorm
    else:
        cauchy = 0.0

    fact = float(np.max(factorization_residual(el)))

    if flow.omega_rate > 0 and zeta is not None:
        d2rel = block_det_relation(el, flow, zeta).rel_residual
    else:
        d2rel = 0.0

    return IdentityResiduals(
        time=flow.t,
        weber_rel=weber,
        cauchy_rel=cauchy,
        factorization_abs=fact,
        d2_rel=d2rel,
    )
