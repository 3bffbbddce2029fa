"""Binary checkpoint format (version 1).

Layout, all little-endian:

    8 bytes   magic "ELROTv1\\0"
    u32       version (= 1)
    u32       n
    f64 x 5   box_length, t, t0, omega_rate, nu
    f64 x 12 n^3   fields, x-fastest within each component, component-major,
                   in the order u1 u2 u3, l1 l2 l3, v1 v2 v3, z1 z2 z3
                   (z = vorticity snapshot of the window)
    u64       tracer count m
    f64 x 6 m      per tracer: label a (3), unwrapped position X (3)

Readers reject a wrong magic or version and report the file offset of
any truncation together with the section that is missing.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import spectral as sp
from .flow import FlowState
from .grid import Grid
from .maps import ELState, TracerSet

MAGIC = b"ELROTv1\x00"
VERSION = 1


class CheckpointError(IOError):
    pass


@dataclass
class CheckpointData:
    """Raw checkpoint contents; arrays are physical, [ix, iy, iz] indexed."""

    n: int
    box_length: float
    t: float
    t0: float
    omega_rate: float
    nu: float
    u: np.ndarray
    ell: np.ndarray
    v: np.ndarray
    zeta0: np.ndarray
    labels: np.ndarray
    positions: np.ndarray

    @classmethod
    def from_state(cls, flow: FlowState, el: ELState, tracers: TracerSet | None):
        g = flow.grid
        zeros = np.zeros((0, 3))
        v = sp.to_physical(g, el.vh) if el.vh is not None else g.zeros_vec()
        return cls(
            n=g.n,
            box_length=g.box_length,
            t=flow.t,
            t0=el.t0,
            omega_rate=flow.omega_rate,
            nu=flow.nu,
            u=flow.u(),
            ell=el.ell(),
            v=v,
            zeta0=el.zeta0.copy(),
            labels=tracers.labels if tracers is not None else zeros,
            positions=tracers.x if tracers is not None else zeros,
        )

    def to_state(self) -> tuple[FlowState, ELState]:
        g = Grid(self.n, self.box_length)
        flow = FlowState(
            grid=g,
            uh=sp.to_spectral(g, self.u),
            t=self.t,
            omega_rate=self.omega_rate,
            nu=self.nu,
        )
        el = ELState(
            grid=g,
            lh=sp.to_spectral(g, self.ell),
            t0=self.t0,
            zeta0=self.zeta0,
            vh=sp.to_spectral(g, self.v),
        )
        return flow, el


def _x_fastest(a: np.ndarray) -> np.ndarray:
    """[ix, iy, iz] array -> flat buffer with x varying fastest."""
    return np.ascontiguousarray(a.transpose(2, 1, 0))


def _from_x_fastest(buf: np.ndarray, n: int) -> np.ndarray:
    return np.ascontiguousarray(buf.reshape(n, n, n).transpose(2, 1, 0))


def write_checkpoint(path, data: CheckpointData) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, data.n))
        fh.write(
            struct.pack(
                "<5d", data.box_length, data.t, data.t0, data.omega_rate, data.nu
            )
        )
        for block in (data.u, data.ell, data.v, data.zeta0):
            for comp in block:
                fh.write(_x_fastest(comp).astype("<f8").tobytes())
        m = len(data.labels)
        fh.write(struct.pack("<Q", m))
        if m:
            pairs = np.empty((m, 6))
            pairs[:, :3] = data.labels
            pairs[:, 3:] = data.positions
            fh.write(pairs.astype("<f8").tobytes())


def _read_exact(fh, count: int, section: str) -> bytes:
    buf = fh.read(count)
    if len(buf) != count:
        raise CheckpointError(
            f"truncated checkpoint: section '{section}' incomplete at offset "
            f"{fh.tell() - len(buf)} (wanted {count} bytes, got {len(buf)})"
        )
    return buf


def read_checkpoint(path) -> CheckpointData:
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 8, "header")
        if magic != MAGIC:
            raise CheckpointError(f"bad magic {magic!r}, expected {MAGIC!r}")
        version, n = struct.unpack("<II", _read_exact(fh, 8, "header"))
        if version != VERSION:
            raise CheckpointError(
                f"unsupported checkpoint version {version} (reader handles {VERSION})"
            )
        box_length, t, t0, omega_rate, nu = struct.unpack(
            "<5d", _read_exact(fh, 40, "header")
        )
        n3 = n * n * n
        names = ("u", "ell", "v", "zeta0")
        blocks = {}
        for name in names:
            comps = []
            for c in range(3):
                raw = _read_exact(fh, 8 * n3, f"fields:{name}{c + 1}")
                comps.append(
                    _from_x_fastest(np.frombuffer(raw, dtype="<f8"), n)
                )
            blocks[name] = np.stack(comps)
        (m,) = struct.unpack("<Q", _read_exact(fh, 8, "tracers"))
        if m:
            raw = _read_exact(fh, 48 * m, "tracers")
            pairs = np.frombuffer(raw, dtype="<f8").reshape(m, 6)
            labels = pairs[:, :3].copy()
            positions = pairs[:, 3:].copy()
        else:
            labels = np.zeros((0, 3))
            positions = np.zeros((0, 3))
        trailing = fh.read(1)
        if trailing:
            raise CheckpointError(
                f"unexpected trailing bytes at offset {fh.tell() - 1}"
            )
    return CheckpointData(
        n=n, box_length=box_length, t=t, t0=t0, omega_rate=omega_rate, nu=nu,
        u=blocks["u"], ell=blocks["ell"], v=blocks["v"], zeta0=blocks["zeta0"],
        labels=labels, positions=positions,
    )
