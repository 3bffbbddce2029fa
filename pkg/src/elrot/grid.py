"""Periodic cubic grid with precomputed spectral machinery.

Fields live on an n^3 lattice of the box [0, L)^3 with x_i = (L/n)*j.
Physical arrays are float64 indexed [ix, iy, iz]; spectral arrays are
complex128 in the half-spectrum layout of ``rfftn`` (last axis halved).
The dtype doubles as the representation tag.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Cubic periodic grid of n points per axis on [0, box_length)^3.

    Precomputes wavenumber arrays, the 2/3-rule dealias mask and the
    inverse-Laplacian weights used by the divergence-free projection.
    n must be even and at least 8.
    """

    n: int
    box_length: float = 2.0 * np.pi
    # derived, filled in __post_init__
    dx: float = field(init=False, repr=False)
    x: np.ndarray = field(init=False, repr=False)
    kx: np.ndarray = field(init=False, repr=False)
    ky: np.ndarray = field(init=False, repr=False)
    kz: np.ndarray = field(init=False, repr=False)
    k2: np.ndarray = field(init=False, repr=False)
    inv_k2: np.ndarray = field(init=False, repr=False)
    keep_mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.n < 8 or self.n % 2 != 0:
            raise ValueError(f"grid size n={self.n} must be even and >= 8")
        if self.box_length <= 0:
            raise ValueError("box_length must be positive")
        n = self.n
        L = float(self.box_length)
        object.__setattr__(self, "dx", L / n)
        object.__setattr__(self, "x", (L / n) * np.arange(n))

        scale = 2.0 * np.pi / L
        m_full = np.fft.fftfreq(n, d=1.0 / n)          # integer modes, full axis
        m_half = np.arange(n // 2 + 1, dtype=float)    # integer modes, rfft axis
        # Nyquist zeroed: odd derivatives of real data have no consistent
        # sign there; evolved fields never carry it (dealiased anyway).
        mx = m_full.copy()
        mx[n // 2] = 0.0
        kx = (scale * mx)[:, None, None]
        ky = (scale * mx)[None, :, None]
        mzd = m_half.copy()
        mzd[-1] = 0.0
        kz = (scale * mzd)[None, None, :]
        object.__setattr__(self, "kx", kx)
        object.__setattr__(self, "ky", ky)
        object.__setattr__(self, "kz", kz)

        k2 = kx**2 + ky**2 + kz**2
        inv_k2 = np.zeros_like(k2)
        nz = k2 > 0
        inv_k2[nz] = 1.0 / k2[nz]
        object.__setattr__(self, "k2", k2)
        object.__setattr__(self, "inv_k2", inv_k2)

        cut = n / 3.0
        ax = np.abs(m_full)
        keep = (
            (ax[:, None, None] <= cut)
            & (ax[None, :, None] <= cut)
            & (m_half[None, None, :] <= cut)
        )
        object.__setattr__(self, "keep_mask", keep)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @property
    def spectral_shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n // 2 + 1)

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Coordinate arrays X1, X2, X3 of shape (n, n, n)."""
        return np.meshgrid(self.x, self.x, self.x, indexing="ij")

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def zeros_vec(self) -> np.ndarray:
        return np.zeros((3,) + self.shape)

    def wrap(self, points: np.ndarray) -> np.ndarray:
        """Map positions into [0, L) per axis; identity (bit-exact) on [0, L)."""
        p = np.asarray(points, dtype=float)
        return p - self.box_length * np.floor(p / self.box_length)
