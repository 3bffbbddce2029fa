"""FFT-based field operations on the periodic grid.

All derivatives are spectral (exact for resolved harmonics). Scalar
fields are (n, n, n) arrays, vector fields (3, n, n, n); the complex
dtype marks the spectral representation. Quadratic products are meant
to be dealiased by the caller via :func:`dealias`. Leading axes are
batched through the transforms in one call.
"""

from __future__ import annotations

import os

import numpy as np
from scipy import ndimage
from scipy.fft import irfftn, rfftn

from .grid import Grid

_FFT_AXES = (-3, -2, -1)
_WORKERS = min(os.cpu_count() or 1, 4)


class NonFiniteFieldError(ValueError):
    """A field contains NaN or Inf; message carries the first offending index."""


def _check_finite(values: np.ndarray, what: str) -> None:
    if np.isfinite(values).all():
        return
    bad = np.argwhere(~np.isfinite(values))[0]
    raise NonFiniteFieldError(f"non-finite value in {what} at index {tuple(bad)}")


def to_spectral(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Forward transform, physical -> half-spectrum coefficients."""
    if np.iscomplexobj(f):
        raise ValueError("field is already spectral")
    _check_finite(f, "physical field")
    return rfftn(f, axes=_FFT_AXES, workers=_WORKERS)

def to_physical(grid: Grid, fh: np.ndarray) -> np.ndarray:
    """Inverse transform, coefficients -> physical samples."""
    if not np.iscomplexobj(fh):
        raise ValueError("field is already physical")
    _check_finite(fh.view(float), "spectral field")
    return irfftn(fh, s=grid.shape, axes=_FFT_AXES, workers=_WORKERS)


def partial(grid: Grid, f: np.ndarray, axis: int) -> np.ndarray:
    """d f / d x_axis (axis in 0..2), same representation as the input."""
    k = (grid.kx, grid.ky, grid.kz)[axis]
    if np.iscomplexobj(f):
        return 1j * k * f
    return to_physical(grid, 1j * k * to_spectral(grid, f))


def gradient(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Gradient of a scalar field as a (3, ...) stack."""
    fh = f if np.iscomplexobj(f) else to_spectral(grid, f)
    gh = np.empty((3,) + fh.shape, complex)
    gh[0] = 1j * grid.kx * fh
    gh[1] = 1j * grid.ky * fh
    gh[2] = 1j * grid.kz * fh
    return gh if np.iscomplexobj(f) else to_physical(grid, gh)


def divergence(grid: Grid, u: np.ndarray) -> np.ndarray:
    uh = u if np.iscomplexobj(u) else to_spectral(grid, u)
    dh = 1j * (grid.kx * uh[0] + grid.ky * uh[1] + grid.kz * uh[2])
    return dh if np.iscomplexobj(u) else to_physical(grid, dh)


def curl(grid: Grid, u: np.ndarray) -> np.ndarray:
    uh = u if np.iscomplexobj(u) else to_spectral(grid, u)
    ch = curl_spectral(grid, uh)
    return ch if np.iscomplexobj(u) else to_physical(grid, ch)


def curl_spectral(grid: Grid, uh: np.ndarray) -> np.ndarray:
    kx, ky, kz = grid.kx, grid.ky, grid.kz
    ch = np.empty_like(uh)
    ch[0] = 1j * (ky * uh[2] - kz * uh[1])
    ch[1] = 1j * (kz * uh[0] - kx * uh[2])
    ch[2] = 1j * (kx * uh[1] - ky * uh[0])
    return ch


def laplacian(grid: Grid, f: np.ndarray) -> np.ndarray:
    fh = f if np.iscomplexobj(f) else to_spectral(grid, f)
    lh = -grid.k2 * fh
    return lh if np.iscomplexobj(f) else to_physical(grid, lh)


def leray_project(grid: Grid, u: np.ndarray) -> np.ndarray:
    """Remove the gradient part: u - grad(div^-1 div u). Mean preserved."""
    spectral_in = np.iscomplexobj(u)
    uh = u if spectral_in else to_spectral(grid, u)
    kx, ky, kz = grid.kx, grid.ky, grid.kz
    corr = (kx * uh[0] + ky * uh[1] + kz * uh[2]) * grid.inv_k2
    ph = np.empty_like(uh)
    ph[0] = uh[0] - kx * corr
    ph[1] = uh[1] - ky * corr
    ph[2] = uh[2] - kz * corr
    return ph if spectral_in else to_physical(grid, ph)


def dealias(grid: Grid, fh: np.ndarray) -> np.ndarray:
    """2/3-rule: zero every mode with any |k_i| > n/3 (integer units)."""
    if not np.iscomplexobj(fh):
        raise ValueError("dealias expects a spectral field")
    return fh * grid.keep_mask


def grad_vector_spectral(grid: Grid, uh: np.ndarray) -> np.ndarray:
    """All nine derivatives of a spectral vector field: out[i, j] = d_j u_i."""
    ks = (grid.kx, grid.ky, grid.kz)
    gh = np.empty((3, 3) + uh.shape[1:], complex)
    for i in range(3):
        for j in range(3):
            gh[i, j] = 1j * ks[j] * uh[i]
    return gh


def grad_vector(grid: Grid, u: np.ndarray) -> np.ndarray:
    """All nine derivatives of a vector field: out[i, j] = d_j u_i."""
    uh = u if np.iscomplexobj(u) else to_spectral(grid, u)
    gh = grad_vector_spectral(grid, uh)
    return gh if np.iscomplexobj(u) else to_physical(grid, gh)


def field_max_norm(u: np.ndarray) -> float:
    """Max over the grid of the pointwise Euclidean norm (vector fields)."""
    if u.ndim == 3:
        return float(np.max(np.abs(u)))
    return float(np.sqrt(np.max(np.sum(u * u, axis=0))))


def tensor_max_frobenius(g: np.ndarray) -> float:
    """Max over the grid of the Frobenius norm of a (3, 3, ...) tensor field."""
    return float(np.sqrt(np.max(np.sum(g * g, axis=(0, 1)))))


def energy(grid: Grid, u: np.ndarray) -> float:
    """Kinetic energy 0.5 * integral |u|^2 dx."""
    return 0.5 * float(np.sum(u * u)) * grid.dx**3


def spectral_energy_tail_fraction(grid: Grid, uh: np.ndarray) -> float:
    """Fraction of energy in the top third of the kept (dealiased) band.

    Used as an under-resolution warning signal.
    """
    n = grid.n
    m_full = np.abs(np.fft.fftfreq(n, d=1.0 / n))
    m_half = np.arange(n // 2 + 1, dtype=float)
    mmax = np.maximum(
        np.maximum(m_full[:, None, None], m_full[None, :, None]), m_half[None, None, :]
    )
    cut = n / 3.0
    # rfft stores interior z-modes once; weight them twice for Parseval
    w = np.full(grid.spectral_shape, 2.0)
    w[..., 0] = 1.0
    if n % 2 == 0:
        w[..., -1] = 1.0
    e = w * np.sum(np.abs(uh) ** 2, axis=0)
    total = float(np.sum(e[mmax <= cut]))
    tail = float(np.sum(e[(mmax <= cut) & (mmax > 2.0 * cut / 3.0)]))
    return tail / total if total > 0 else 0.0


class FieldSampler:
    """Periodic B-spline sampler for off-grid evaluation.

    The spline prefilter makes this an interpolant (exact on the grid).
    The default quintic order keeps resolved-harmonic errors below 1e-6
    at n=32, which the plain tricubic stencil misses; the stepper uses
    order=3 for its per-stage tracer pushes.
    """

    def __init__(self, grid: Grid, field: np.ndarray, order: int = 5):
        if np.iscomplexobj(field):
            raise ValueError("sampler expects a physical field")
        _check_finite(field, "sampled field")
        self.grid = grid
        self.order = order
        comps = field[None] if field.ndim == 3 else field
        self._coeffs = [
            ndimage.spline_filter(c, order=order, mode="grid-wrap") for c in comps
        ]
        self._scalar = field.ndim == 3

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        _check_finite(pts, "interpolation points")
        squeeze = pts.ndim == 1
        pts = np.atleast_2d(pts)
        coords = (self.grid.wrap(pts) / self.grid.dx).T
        out = np.stack(
            [
                ndimage.map_coordinates(
                    c, coords, order=self.order, mode="grid-wrap", prefilter=False
                )
                for c in self._coeffs
            ],
            axis=-1,
        )
        if self._scalar:
            out = out[..., 0]
        return out[0] if squeeze else out


def interpolate(grid: Grid, field: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Sample a (vector or scalar) field at arbitrary points, periodically wrapped."""
    return FieldSampler(grid, field)(points)
