"""Rossby-number gating and the certified vertical-transport bounds.

Every bound is evaluated per reset window and only asserted when the
hypotheses measured on that window hold: displacement-gradient sup
g <= 1/4 and maximal local Rossby number rho = sup||omega||_inf / Omega
<= 1/4. The certified thresholds are evaluated verbatim:

    sup |dz ell|      <=  14 rho     (and the sharper g-dependent threshold)
    sup |d_{a3} lambda| <=  9 rho
    pair deviation    <=  (rho/2) (1 + exp(2 * int ||grad u||))
    set separation    >=  (1 + 14 rho)^{-1} d(t0)

Sup-norms over labels are estimated on the tracer lattice, sup-norms
over x on the full grid; label derivatives use 4th-order centered
differences on the periodic lattice.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import spectral as sp
from .grid import Grid
from .maps import TracerSet, label_derivative


def rossby_number(vorticity_sup: float, omega_rate: float) -> float:
    """rho = (running sup of ||omega||_inf over the window) / Omega."""
    if omega_rate <= 0.0:
        raise ValueError("the Rossby number needs a positive rotation rate")
    return vorticity_sup / omega_rate


@dataclass
class VerticalGradientThresholds:
    """All intermediate certified quantities of the dz-ell bound chain."""

    g: float
    rho: float
    s3_bound: float            # (1 + 2g + 3g^2) rho
    sj_bound: float            # (1 + 2g)(1 + 2g + 3g^2) rho
    d2_lower: float            # 1 - (1 + 2g + 3g^2) rho
    dzlj_bound: float          # sj_bound / d2_lower
    one_plus_t2_lower: float   # 1 - 2g^2 - (1 + 2g + 3g^2) rho
    cg_threshold: float        # certified |dz ell_3| threshold
    bound_14rho: float

    @classmethod
    def evaluate(cls, g: float, rho: float) -> "VerticalGradientThresholds":
        poly = 1.0 + 2.0 * g + 3.0 * g * g
        s3 = poly * rho
        sj = (1.0 + 2.0 * g) * s3
        d2_lower = 1.0 - s3
        t2_lower = 1.0 - 2.0 * g * g - s3
        dzlj = sj / d2_lower if d2_lower > 0 else np.inf
        if t2_lower > 0 and d2_lower > 0:
            cg = (1.0 / t2_lower) * (1.0 + 2.0 * g * (1.0 + 2.0 * g) / d2_lower) * s3
        else:
            cg = np.inf
        return cls(
            g=g, rho=rho, s3_bound=s3, sj_bound=sj, d2_lower=d2_lower,
            dzlj_bound=dzlj, one_plus_t2_lower=t2_lower, cg_threshold=cg,
            bound_14rho=14.0 * rho,
        )


@dataclass
class BoundCheck:
    """Outcome of one certified bound on one window."""

    name: str
    applicable: bool
    measured: float
    threshold: float
    passed: bool | None        # None when not applicable

    @classmethod
    def gate(cls, name: str, applicable: bool, measured: float, threshold: float):
        ok = bool(measured <= threshold) if applicable else None
        return cls(name, applicable, measured, threshold, ok)

    @property
    def margin(self) -> float:
        return self.threshold - self.measured


def hypotheses_met(g_sup: float, rho: float, g_max: float = 0.25,
                   rossby_gate: float = 0.25) -> bool:
    return g_sup <= g_max and rho <= rossby_gate


def certify_dz_ell(
    dz_ell_sup: float, g_sup: float, rho: float,
    g_max: float = 0.25, rossby_gate: float = 0.25,
) -> tuple[BoundCheck, BoundCheck, VerticalGradientThresholds]:
    """Gate and check sup|dz ell| against 14*rho and the sharper threshold."""
    ok = hypotheses_met(g_sup, rho, g_max, rossby_gate)
    th = VerticalGradientThresholds.evaluate(g_sup, rho)
    coarse = BoundCheck.gate("dz_ell<=14rho", ok, dz_ell_sup, th.bound_14rho)
    # the component-wise chain certifies |dz ell_j| <= dzlj and |dz ell_3| <= cg;
    # the Euclidean sup is covered by their quadrature sum
    sharp_threshold = float(np.sqrt(2.0 * th.dzlj_bound**2 + th.cg_threshold**2))
    sharp = BoundCheck.gate("dz_ell<=sharp", ok, dz_ell_sup, sharp_threshold)
    return coarse, sharp, th


# ---------------------------------------------------------------------------
# label-space measurements on the tracer lattice


def lattice_spacing(grid: Grid, tr: TracerSet) -> float:
    return grid.box_length / tr.lat_n


def dz_lambda_lattice(grid: Grid, tr: TracerSet) -> np.ndarray:
    """d lambda / d a3 on the label lattice, (nl, nl, nl, 3)."""
    lam = tr.lattice_displacement()
    return label_derivative(lam, lattice_spacing(grid, tr), axis=2)


def dz_lambda_sup(grid: Grid, tr: TracerSet) -> float:
    d = dz_lambda_lattice(grid, tr)
    return float(np.sqrt(np.max(np.sum(d * d, axis=-1))))


def a3_variation(tr: TracerSet) -> float:
    """Largest spread of lambda along vertical label lines (2-D limit probe)."""
    lam = tr.lattice_displacement()
    spread = lam.max(axis=2) - lam.min(axis=2)
    return float(spread.max())


def certify_dz_lambda(
    grid: Grid, tr: TracerSet, g_sup: float, rho: float,
    g_max: float = 0.25, rossby_gate: float = 0.25,
) -> BoundCheck:
    ok = hypotheses_met(g_sup, rho, g_max, rossby_gate)
    return BoundCheck.gate(
        "dz_lambda<=9rho", ok, dz_lambda_sup(grid, tr), 9.0 * rho
    )


@dataclass
class VerticalMapIdentity:
    """Residual of the vertical-derivative relation of the direct map.

    dX3/da3 = 1 + (omega_3(X(a,t),t) - zeta(a) . grad_a X3) / (2 Omega),
    evaluated on the tracer lattice with zeta(a) the window's vorticity
    snapshot at the labels. The contraction runs over the label gradient
    of X3 (the row of grad_a X), which is the form the transported total
    vorticity implies.
    """

    residual_max: float
    residual_rel: float
    points: int


def vertical_map_identity(
    grid: Grid,
    tr: TracerSet,
    zeta_at_labels: np.ndarray,
    omega3_at_x: np.ndarray,
    omega_rate: float,
) -> VerticalMapIdentity:
    """zeta_at_labels: (nl^3, 3); omega3_at_x: omega_3 sampled at X(a, t)."""
    nl = tr.lat_n
    lam = tr.lattice_displacement()
    h = lattice_spacing(grid, tr)
    gradX3 = np.stack(
        [label_derivative(lam[..., 2], h, axis=j) for j in range(3)], axis=-1
    )
    gradX3[..., 2] += 1.0
    zl = zeta_at_labels[: nl**3].reshape(nl, nl, nl, 3)
    om3 = omega3_at_x[: nl**3].reshape(nl, nl, nl)
    lhs = gradX3[..., 2]
    rhs = 1.0 + (om3 - np.sum(zl * gradX3, axis=-1)) / (2.0 * omega_rate)
    res = np.abs(lhs - rhs)
    return VerticalMapIdentity(
        residual_max=float(res.max()),
        residual_rel=float(res.max() / max(np.abs(lhs).max(), 1e-300)),
        points=nl**3,
    )


@dataclass
class OdeResidual:
    """Defect of the vertical-displacement equation over the lattice."""

    residual_max: float
    skipped: int
    gated_local_rossby: bool   # True when every label obeyed |zeta|/Omega < 2


def displacement_ode_residual(
    grid: Grid,
    tr: TracerSet,
    zeta_at_labels: np.ndarray,
    omega3_at_x: np.ndarray | None,
    omega_rate: float,
    steady: bool = False,
) -> OdeResidual:
    """Evaluate d_{a3}lambda_3 + eps_1 d_{a1}lambda_3 + eps_2 d_{a2}lambda_3 - rhs.

    eps_j = zeta_j / (2 Omega (1 + zeta_3 / 2 Omega)); for steady flows the
    right side vanishes, otherwise it is (omega_3(X) - zeta_3)/(same factor).
    Labels where |1 + zeta_3/2 Omega| < 0.1 are skipped and counted. The
    Theorem-level hypothesis is the pointwise local Rossby number
    |zeta(a)|/Omega < 2, reported via gated_local_rossby.
    """
    if omega_rate <= 0.0:
        raise ValueError("needs a positive rotation rate")
    nl = tr.lat_n
    lam = tr.lattice_displacement()
    h = lattice_spacing(grid, tr)
    dlam3 = np.stack(
        [label_derivative(lam[..., 2], h, axis=j) for j in range(3)], axis=-1
    )
    zl = zeta_at_labels[: nl**3].reshape(nl, nl, nl, 3)
    beta = 1.0 + zl[..., 2] / (2.0 * omega_rate)
    valid = np.abs(beta) >= 0.1
    denom = 2.0 * omega_rate * beta
    eps1 = np.where(valid, zl[..., 0] / denom, 0.0)
    eps2 = np.where(valid, zl[..., 1] / denom, 0.0)
    lhs = dlam3[..., 2] + eps1 * dlam3[..., 0] + eps2 * dlam3[..., 1]
    if steady or omega3_at_x is None:
        rhs = 0.0
    else:
        om3 = omega3_at_x[: nl**3].reshape(nl, nl, nl)
        rhs = np.where(valid, (om3 - zl[..., 2]) / denom, 0.0)
    res = np.where(valid, np.abs(lhs - rhs), 0.0)
    local_rossby = np.sqrt(np.sum(zl * zl, axis=-1)) / omega_rate
    return OdeResidual(
        residual_max=float(res.max()),
        skipped=int((~valid).sum()),
        gated_local_rossby=bool((local_rossby < 2.0).all()),
    )


# ---------------------------------------------------------------------------
# separation theorems


@dataclass
class PairSeparationReport:
    """Vertical pair deviations against the certified envelope."""

    deviations: np.ndarray     # |X3(P) - X3(Q) + d| per pair (unwrapped)
    bound: float               # (rho/2)(1 + exp(2 * int ||grad u||))
    gaps: np.ndarray
    applicable: bool
    passed: bool | None

    @property
    def worst_margin(self) -> float:
        return float(self.bound - self.deviations.max(initial=0.0))


def pair_separation_check(
    tr: TracerSet, rho: float, grad_u_integral: float, applicable: bool = True
) -> PairSeparationReport:
    dev = np.abs(
        tr.x[tr.pair_p, 2] - tr.x[tr.pair_q, 2] + tr.pair_gap
    ) if len(tr.pair_p) else np.empty(0)
    bound = 0.5 * rho * (1.0 + np.exp(2.0 * grad_u_integral))
    ok = bool((dev <= bound).all()) if (applicable and len(dev)) else None
    return PairSeparationReport(dev, float(bound), tr.pair_gap, applicable, ok)


@dataclass
class SetSeparationReport:
    """Slab-set vertical separation against the certified floor."""

    delta: float               # vertical separation estimate (aligned pairs)
    dist0: float               # full distance between the label sets
    floor: float               # (1 + 14 rho)^{-1} d(t0)
    aligned_pairs: int
    applicable: bool
    passed: bool | None


def _torus_min_image(diff: np.ndarray, L: float) -> np.ndarray:
    return diff - L * np.round(diff / L)


def set_separation_check(
    grid: Grid, tr: TracerSet, rho: float, applicable: bool = True,
    align_tol: float | None = None,
) -> SetSeparationReport:
    """delta(t) >= (1 + 14 rho)^{-1} d(t0) for the two registered slab sets.

    delta is the infimum of distances over (nearly) vertically aligned
    cross pairs, which by construction dominates the all-pair distance
    infimum; both are estimated on the tracer clouds with torus metric
    in the horizontal and unwrapped vertical differences.
    """
    if len(tr.set_a) == 0 or len(tr.set_b) == 0:
        raise ValueError("set separation needs two non-empty tracer subsets")
    L = grid.box_length
    if align_tol is None:
        align_tol = 0.75 * L / max(tr.lat_n, 1)

    a0 = tr.labels[tr.set_a]
    b0 = tr.labels[tr.set_b]
    d0 = _torus_min_image(a0[:, None, :] - b0[None, :, :], L)
    dist0 = float(np.sqrt((d0**2).sum(axis=-1)).min())

    xa = tr.x[tr.set_a]
    xb = tr.x[tr.set_b]
    dh = _torus_min_image(xa[:, None, :2] - xb[None, :, :2], L)
    horiz = np.sqrt((dh**2).sum(axis=-1))
    dz = np.abs(xa[:, None, 2] - xb[None, :, 2])
    full = np.sqrt(horiz**2 + dz**2)
    aligned = horiz <= align_tol
    if aligned.any():
        delta = float(full[aligned].min())
        count = int(aligned.sum())
    else:
        delta = float(full.min())
        count = 0
    floor = dist0 / (1.0 + 14.0 * rho)
    ok = bool(delta >= floor) if applicable else None
    return SetSeparationReport(delta, dist0, floor, count, applicable, ok)


# ---------------------------------------------------------------------------
# rotation-rate sweep (two-dimensionalization probe)


@dataclass
class SweepRow:
    omega: float
    rho: float
    dz_ell_sup: float
    dz_lambda_sup: float
    a3_var: float
    hypotheses: bool
    failed: str | None = None


@dataclass
class SweepReport:
    rows: list[SweepRow]
    slope: float | None        # log-log slope of dz_ell_sup vs 1/omega
    slope_points: int
    a3_monotone: bool | None

    def included(self) -> list[SweepRow]:
        return [r for r in self.rows if r.hypotheses and r.failed is None]


def two_dim_limit_probe(rows: list[SweepRow]) -> SweepReport:
    """Fit the scaling of vertical structure against 1/Omega.

    Runs violating the window hypotheses are excluded from the fit; a
    single usable point yields slope None (degenerate fit).
    """
    inc = [r for r in rows if r.hypotheses and r.failed is None]
    slope = None
    if len(inc) >= 2 and all(r.dz_ell_sup > 0 for r in inc):
        xs = np.log([1.0 / r.omega for r in inc])
        ys = np.log([r.dz_ell_sup for r in inc])
        slope = float(np.polyfit(xs, ys, 1)[0])
    mono = None
    if len(inc) >= 2:
        ordered = sorted(inc, key=lambda r: r.omega)
        vals = [r.a3_var for r in ordered]
        mono = all(b <= a * (1.0 + 1e-12) for a, b in zip(vals, vals[1:]))
    return SweepReport(rows=rows, slope=slope, slope_points=len(inc), a3_monotone=mono)
