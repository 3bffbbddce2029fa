"""Back-to-labels displacement, reset bookkeeping and Lagrangian tracers.

The displacement ell = A - x is the periodic storable form of the
back-to-labels map A (A itself grows linearly across the box). It obeys

    d ell/dt + u.grad(ell) - nu*Lap(ell) = -u,      ell(., t0) = 0,

and is re-zeroed ("reset") whenever its gradient leaves the smallness
regime the transport bounds need. Tracers integrate the direct map
X(a, t) from a regular label lattice re-seeded at each reset; vertical
pairs and slab sets ride along for the separation theorems.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import spectral as sp
from .flow import FlowState, vorticity
from .grid import Grid
from .timestep import advance

#: displacement-gradient budget: exp(log(5/4)) - 1 = 1/4, the default g cap
GRAD_U_BUDGET = math.log(5.0 / 4.0)


@dataclass
class ELState:
    """Displacement, virtual velocity and the vorticity snapshot of a window."""

    grid: Grid
    lh: np.ndarray                 # spectral displacement, (3, n, n, n//2+1)
    t0: float                      # time of the last reset
    zeta0: np.ndarray              # physical vorticity at t0 (Cauchy datum)
    vh: np.ndarray | None = None   # spectral virtual velocity

    @classmethod
    def from_reset(cls, flow: FlowState, evolve_v: bool = True) -> "ELState":
        """Fresh window state: ell = 0, v = u, zeta0 = curl(u), t0 = t."""
        lh = np.zeros((3,) + flow.grid.spectral_shape, complex)
        vh = flow.uh.copy() if evolve_v else None
        return cls(grid=flow.grid, lh=lh, t0=flow.t, zeta0=vorticity(flow), vh=vh)

    def ell(self) -> np.ndarray:
        return sp.to_physical(self.grid, self.lh)

    def grad_ell(self) -> np.ndarray:
        """gl[a, j] = d_j ell_a, physical."""
        return sp.to_physical(self.grid, sp.grad_vector_spectral(self.grid, self.lh))

    def g_norm(self) -> float:
        """g = max over the grid of the Frobenius norm of grad(ell)."""
        return sp.tensor_max_frobenius(self.grad_ell())


def step_displacement(el: ELState, flow: FlowState, dt: float) -> ELState:
    """Advance ell by one 4th-order step (velocity staged internally)."""
    _, lh1, _, _ = advance(
        flow.grid, flow.uh, dt, flow.omega_rate, flow.nu, lh=el.lh
    )
    if not np.isfinite(lh1.view(float)).all():
        raise FloatingPointError("non-finite displacement after step")
    return replace(el, lh=lh1)


def grad_A(el: ELState) -> np.ndarray:
    """Jacobian of the back-to-labels map: J[a, j] = d_j A_a = I + grad(ell)."""
    J = el.grad_ell()
    J[0, 0] += 1.0
    J[1, 1] += 1.0
    J[2, 2] += 1.0
    return J


def det_grad_A(el: ELState) -> np.ndarray:
    """det(grad A) field; 1 exactly for smooth incompressible transport."""
    J = grad_A(el)
    return (
        J[0, 0] * (J[1, 1] * J[2, 2] - J[1, 2] * J[2, 1])
        - J[0, 1] * (J[1, 0] * J[2, 2] - J[1, 2] * J[2, 0])
        + J[0, 2] * (J[1, 0] * J[2, 1] - J[1, 1] * J[2, 0])
    )


@dataclass
class ResetDecision:
    reset: bool
    reason: str | None
    g: float
    det_min: float


def check_reset(
    el: ELState,
    grad_u_integral: float,
    g_max: float = 0.25,
    budget: float = GRAD_U_BUDGET,
    det_guard: float = 0.5,
) -> ResetDecision:
    """Decide whether the window must close.

    Resets when the measured displacement gradient exceeds g_max, when the
    accumulated integral of ||grad u||_inf exceeds log(5/4) (which already
    guarantees g <= 1/4 on the window), or when det(grad A) approaches
    singularity. The caller performs the actual reset via ELState.from_reset.
    """
    g = el.g_norm()
    dmin = float(det_grad_A(el).min())
    if dmin <= det_guard:
        return ResetDecision(True, "NEAR_SINGULAR", g, dmin)
    if g > g_max:
        return ResetDecision(True, "g_exceeded", g, dmin)
    if grad_u_integral > budget:
        return ResetDecision(True, "grad_u_budget", g, dmin)
    return ResetDecision(False, None, g, dmin)


def d3X_from_A(el: ELState) -> np.ndarray:
    """Vertical derivative of the direct map at label A(x): grad(A1) x grad(A2).

    Rows of the Jacobian are the gradients of the components; their cross
    product is the third column of (grad A)^{-1} times det(grad A).
    """
    J = grad_A(el)
    return np.cross(J[0], J[1], axis=0)


def d3X_expanded(el: ELState) -> np.ndarray:
    """Same object written out in displacement gradients (polynomial form)."""
    gl = el.grad_ell()
    out = np.empty((3,) + el.grid.shape)
    out[0] = gl[0, 1] * gl[1, 2] - (1.0 + gl[1, 1]) * gl[0, 2]
    out[1] = gl[1, 0] * gl[0, 2] - (1.0 + gl[0, 0]) * gl[1, 2]
    t2 = gl[0, 0] + gl[1, 1]
    d2 = gl[0, 0] * gl[1, 1] - gl[0, 1] * gl[1, 0]
    out[2] = 1.0 + t2 + d2
    return out


# ---------------------------------------------------------------------------
# tracers


@dataclass
class TracerSet:
    """Labels and current (unwrapped) positions of the direct Lagrangian map.

    The first lat_n^3 tracers form a regular label lattice used for
    sup-norm estimates and label-space derivatives; pair_p/pair_q index
    registered vertical pairs (gap pair_gap along z at t0); set_a/set_b
    index the two slab clouds for the set-separation check.
    """

    labels: np.ndarray             # (m, 3), in [0, L)^3
    x: np.ndarray                  # (m, 3), unwrapped positions
    t0: float
    lat_n: int
    pair_p: np.ndarray
    pair_q: np.ndarray
    pair_gap: np.ndarray
    set_a: np.ndarray
    set_b: np.ndarray

    def displacement(self) -> np.ndarray:
        """lambda = X - a, periodic over the label lattice."""
        return self.x - self.labels

    def lattice_positions(self) -> np.ndarray:
        nl = self.lat_n
        return self.x[: nl**3].reshape(nl, nl, nl, 3)

    def lattice_displacement(self) -> np.ndarray:
        nl = self.lat_n
        return self.displacement()[: nl**3].reshape(nl, nl, nl, 3)


def seed_tracers(
    grid: Grid,
    t0: float,
    lat_n: int = 8,
    pair_count: int = 0,
    pair_gap_range: tuple[float, float] | None = None,
    slab_spec: tuple[float, float, float, int] | None = None,
    seed: int = 0,
) -> TracerSet:
    """Fresh tracer population for a window starting at t0.

    Positions equal labels exactly. The RNG is derived from (seed, t0 bits)
    so a run resumed at a reset instant regenerates the same population.
    slab_spec = (z_center_a, z_center_b, half_width, points_per_axis).
    """
    L = grid.box_length
    key = int(np.float64(t0).view(np.uint64))
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), key]))

    pts = [
        (L / lat_n)
        * np.stack(
            np.meshgrid(*(np.arange(lat_n),) * 3, indexing="ij"), axis=-1
        ).reshape(-1, 3)
    ]
    m = lat_n**3

    if pair_count > 0:
        lo, hi = pair_gap_range if pair_gap_range else (L / 16.0, L / 2.0)
        p = rng.uniform(0.0, L, size=(pair_count, 3))
        gap = rng.uniform(lo, hi, size=pair_count)
        q = p.copy()
        q[:, 2] += gap
        pq = np.empty((2 * pair_count, 3))
        pq[0::2] = p
        pq[1::2] = grid.wrap(q)
        pts.append(pq)
        pair_p = m + 2 * np.arange(pair_count)
        pair_q = pair_p + 1
        m += 2 * pair_count
    else:
        pair_p = pair_q = np.empty(0, dtype=int)
        gap = np.empty(0)

    if slab_spec is not None:
        za, zb, hw, s = slab_spec
        h = (L / s) * np.arange(s)
        hx, hy = np.meshgrid(h, h, indexing="ij")
        slabs = []
        for zc in (za, zb):
            for dz in (-hw, hw):
                layer = np.column_stack(
                    [hx.ravel(), hy.ravel(), np.full(s * s, zc + dz)]
                )
                slabs.append(layer)
        slab_pts = grid.wrap(np.concatenate(slabs))
        pts.append(slab_pts)
        per = 2 * s * s
        set_a = m + np.arange(per)
        set_b = m + per + np.arange(per)
        m += 2 * per
    else:
        set_a = set_b = np.empty(0, dtype=int)

    labels = np.concatenate(pts)
    return TracerSet(
        labels=labels,
        x=labels.copy(),
        t0=t0,
        lat_n=lat_n,
        pair_p=pair_p,
        pair_q=pair_q,
        pair_gap=gap,
        set_a=set_a,
        set_b=set_b,
    )


def advance_tracers(tr: TracerSet, flow: FlowState, dt: float) -> TracerSet:
    """Push tracers one 4th-order step (stage velocities sampled tricubically)."""
    _, _, _, x1 = advance(
        flow.grid, flow.uh, dt, flow.omega_rate, flow.nu, trx=tr.x
    )
    return replace(tr, x=x1)


def back_to_labels(el: ELState, points: np.ndarray) -> np.ndarray:
    """A(x) = x + ell(x) at arbitrary points (spline-sampled displacement)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    ell = sp.FieldSampler(el.grid, sp.to_physical(el.grid, el.lh))(pts)
    return pts + ell


def tracer_roundtrip_error(el: ELState, tr: TracerSet) -> float:
    """max |A(X(a, t)) - a| with periodic distance; audits A = X^{-1}."""
    a_rec = back_to_labels(el, tr.x)
    L = el.grid.box_length
    diff = a_rec - tr.labels
    diff -= L * np.round(diff / L)
    return float(np.max(np.sqrt(np.sum(diff**2, axis=1))))


def label_derivative(field_on_lattice: np.ndarray, spacing: float, axis: int) -> np.ndarray:
    """4th-order centered derivative over a periodic label lattice.

    field_on_lattice has label axes first, e.g. (nl, nl, nl, ...) and the
    derivative is taken along one of the first three axes.
    """
    f = field_on_lattice
    fm2 = np.roll(f, 2, axis=axis)
    fm1 = np.roll(f, 1, axis=axis)
    fp1 = np.roll(f, -1, axis=axis)
    fp2 = np.roll(f, -2, axis=axis)
    return (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * spacing)
