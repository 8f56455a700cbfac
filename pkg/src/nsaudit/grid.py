"""
Periodic grid, spectral vector fields and the norms used by the audits.

Fields live on the square torus [0, L)^2 sampled on a uniform n x n grid.
Spectral coefficients are Fourier-series coefficients, i.e.

    f(x) = sum_k f_hat(k) exp(i k.x),   f_hat = fft2(f) / n^2,

so that Parseval reads ||f||_2^2 = L^2 sum_k |f_hat(k)|^2.  Arrays are
indexed ``[component, ix, iy]`` in numpy FFT ordering.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

TWO_PI = 2.0 * np.pi
SNAPSHOT_MAGIC = b"NS2F"
SNAPSHOT_VERSION = 1
FLAG_SOLENOIDAL = 1
FLAG_MEAN_ZERO = 2


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with ``n`` points per axis and period ``length``."""

    n: int
    length: float = TWO_PI
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 8 or self.n % 2:
            raise ValueError(f"n must be an even integer >= 8, got {self.n}")
        if not self.length > 0:
            raise ValueError(f"length must be positive, got {self.length}")
        if not 0.0 < self.dealias_fraction <= 1.0:
            raise ValueError("dealias_fraction must lie in (0, 1]")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "length", float(self.length))

    @property
    def spacing(self) -> float:
        return self.length / self.n

    @property
    def k_unit(self) -> float:
        """Smallest nonzero wavenumber, 2 pi / L."""
        return TWO_PI / self.length

    @cached_property
    def mode_index(self) -> np.ndarray:
        """Integer mode numbers {-n/2+1, ..., n/2} in FFT order."""
        m = np.fft.fftfreq(self.n, d=1.0 / self.n)
        m[self.n // 2] = self.n // 2
        return m

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        k = self.k_unit * self.mode_index
        kx, ky = np.meshgrid(k, k, indexing="ij")
        kx.setflags(write=False)
        ky.setflags(write=False)
        return kx, ky

    @cached_property
    def derivative_wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        """Wavenumbers for odd derivatives; the Nyquist row/column is zeroed."""
        k = self.k_unit * self.mode_index
        k[self.n // 2] = 0.0
        kx, ky = np.meshgrid(k, k, indexing="ij")
        kx.setflags(write=False)
        ky.setflags(write=False)
        return kx, ky

    @cached_property
    def k_squared(self) -> np.ndarray:
        kx, ky = self.wavenumbers
        k2 = kx**2 + ky**2
        k2.setflags(write=False)
        return k2

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        kx, ky = self.wavenumbers
        cutoff = self.dealias_fraction * (self.n / 2) * self.k_unit
        mask = np.maximum(np.abs(kx), np.abs(ky)) <= cutoff * (1 + 1e-12)
        mask.setflags(write=False)
        return mask

    @property
    def dealias_cutoff(self) -> float:
        return self.dealias_fraction * (self.n / 2) * self.k_unit

    @cached_property
    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.arange(self.n) * self.spacing
        return tuple(np.meshgrid(x, x, indexing="ij"))


def _check_grid(a, b):
    if a.grid != b.grid:
        raise ValueError(f"grid mismatch: {a.grid} vs {b.grid}")


@dataclass(frozen=True, eq=False)
class SpectralVectorField:
    """Fourier coefficients of a real 2D vector field, shape ``(2, n, n)``."""

    grid: Grid
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=np.complex128)
        if c.shape != (2, self.grid.n, self.grid.n):
            raise ValueError(f"coeffs must have shape (2, n, n), got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite spectral coefficients")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, grid: Grid) -> SpectralVectorField:
        return cls(grid, np.zeros((2, grid.n, grid.n), dtype=np.complex128))

    def __add__(self, other):
        _check_grid(self, other)
        return SpectralVectorField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        _check_grid(self, other)
        return SpectralVectorField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return SpectralVectorField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralVectorField(self.grid, -self.coeffs)

    def divergence_residual(self) -> float:
        """max over k != 0 of |k . u_hat(k)| / |u_hat(k)| (0 for the zero field).

        Modes below the round-off floor (1e-14 of the largest coefficient) are
        skipped: their direction is noise.
        """
        kx, ky = self.grid.wavenumbers
        kdotu = np.abs(kx * self.coeffs[0] + ky * self.coeffs[1])
        mag = np.sqrt(np.sum(np.abs(self.coeffs) ** 2, axis=0))
        floor = 1e-14 * float(np.max(mag, initial=0.0))
        nz = (mag > floor) & (self.grid.k_squared > 0)
        return float(np.max(kdotu[nz] / mag[nz])) if nz.any() else 0.0

    def is_solenoidal(self, tol: float = 1e-12) -> bool:
        return self.divergence_residual() <= tol

    def is_mean_zero(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.coeffs[:, 0, 0]) <= tol))

    def hermitian_residual(self) -> float:
        c = self.coeffs
        return float(np.max(np.abs(c - np.conj(reflect(c))), initial=0.0))

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        scale = max(float(np.max(np.abs(self.coeffs), initial=0.0)), 1.0)
        return self.hermitian_residual() <= tol * scale


@dataclass(frozen=True, eq=False)
class PhysicalVectorField:
    """Real samples of a 2D vector field on the grid, shape ``(2, n, n)``."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.shape != (2, self.grid.n, self.grid.n):
            raise ValueError(f"values must have shape (2, n, n), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite field values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def reflect(c: np.ndarray) -> np.ndarray:
    """Return c(-k) for arrays whose last two axes are in FFT order."""
    return np.roll(np.flip(c, axis=(-2, -1)), 1, axis=(-2, -1))


def forward_transform(f: PhysicalVectorField) -> SpectralVectorField:
    n = f.grid.n
    return SpectralVectorField(f.grid, np.fft.fft2(f.values, axes=(-2, -1)) / n**2)


def inverse_transform(f: SpectralVectorField) -> PhysicalVectorField:
    return PhysicalVectorField(f.grid, to_physical(f.coeffs))


def to_physical(coeffs: np.ndarray) -> np.ndarray:
    """Real part of the inverse transform of coefficient arrays ``(..., n, n)``."""
    n = coeffs.shape[-1]
    return np.real(np.fft.ifft2(coeffs, axes=(-2, -1))) * n**2


def _pad_axis(a: np.ndarray, axis: int, m: int) -> np.ndarray:
    n = a.shape[axis]
    shape = list(a.shape)
    shape[axis] = m
    out = np.zeros(shape, dtype=a.dtype)
    h = n // 2
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    src[axis], dst[axis] = slice(0, h), slice(0, h)
    out[tuple(dst)] = a[tuple(src)]
    src[axis], dst[axis] = slice(h + 1, n), slice(m - h + 1, m)
    out[tuple(dst)] = a[tuple(src)]
    # Nyquist mode is split between +n/2 and -n/2 to keep the field real
    src[axis] = slice(h, h + 1)
    dst[axis] = slice(h, h + 1)
    out[tuple(dst)] += 0.5 * a[tuple(src)]
    dst[axis] = slice(m - h, m - h + 1)
    out[tuple(dst)] += 0.5 * a[tuple(src)]
    return out


def pad_coeffs(coeffs: np.ndarray, factor: int = 2) -> np.ndarray:
    """Zero-pad coefficient arrays ``(..., n, n)`` to ``(..., factor*n, factor*n)``."""
    n = coeffs.shape[-1]
    m = factor * n
    return _pad_axis(_pad_axis(coeffs, -1, m), -2, m)


def padded_values(coeffs: np.ndarray, factor: int = 2) -> np.ndarray:
    """Evaluate coefficient arrays on a ``factor``-times finer physical grid."""
    return to_physical(pad_coeffs(coeffs, factor))


def leray_project(f: SpectralVectorField) -> SpectralVectorField:
    """Apply P(k) = I - k k^T / |k|^2 modewise (identity at k = 0)."""
    return SpectralVectorField(f.grid, project_coeffs(f.grid, f.coeffs))


def project_coeffs(grid: Grid, c: np.ndarray) -> np.ndarray:
    kx, ky = grid.wavenumbers
    k2 = grid.k_squared
    inv = np.zeros_like(k2)
    np.divide(1.0, k2, out=inv, where=k2 > 0)
    kdotc = (kx * c[0] + ky * c[1]) * inv
    return np.stack([c[0] - kx * kdotc, c[1] - ky * kdotc])


def dealias(f: SpectralVectorField) -> SpectralVectorField:
    return SpectralVectorField(f.grid, f.coeffs * f.grid.dealias_mask)


def gradient(f: SpectralVectorField) -> np.ndarray:
    """Spectral gradient tensor, shape ``(2, 2, n, n)`` with ``[i, j] = d_j f_i``."""
    kx, ky = f.grid.derivative_wavenumbers
    c = f.coeffs
    return np.stack([np.stack([1j * kx * c[i], 1j * ky * c[i]]) for i in range(2)])


def divergence(f: SpectralVectorField) -> np.ndarray:
    kx, ky = f.grid.derivative_wavenumbers
    return 1j * (kx * f.coeffs[0] + ky * f.coeffs[1])


def vorticity(f: SpectralVectorField) -> np.ndarray:
    """Spectral coefficients of d1 u2 - d2 u1."""
    kx, ky = f.grid.derivative_wavenumbers
    return 1j * (kx * f.coeffs[1] - ky * f.coeffs[0])


def inner(f: SpectralVectorField, g: SpectralVectorField) -> float:
    """L^2 inner product (f, g) = int f.g dx."""
    _check_grid(f, g)
    return float(f.grid.length**2 * np.sum(np.real(f.coeffs * np.conj(g.coeffs))))


def norm_l2(f: SpectralVectorField) -> float:
    return float(f.grid.length * np.sqrt(np.sum(np.abs(f.coeffs) ** 2)))


def norm_grad_l2(f: SpectralVectorField) -> float:
    k2 = f.grid.k_squared
    return float(f.grid.length * np.sqrt(np.sum(k2 * np.abs(f.coeffs) ** 2)))


def pointwise_magnitude(values: np.ndarray) -> np.ndarray:
    """Euclidean magnitude over all leading (component) axes."""
    v = values.reshape(-1, *values.shape[-2:])
    return np.sqrt(np.sum(v**2, axis=0))


def lp_of_values(values: np.ndarray, p: float, length: float) -> float:
    """Rectangle-rule L^p norm of grid samples with components on leading axes."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    mag = pointwise_magnitude(values)
    if np.isinf(p):
        return float(np.max(mag))
    cell = (length / mag.shape[-1]) ** 2
    peak = float(np.max(mag))
    if peak == 0.0:
        return 0.0
    # scale by the peak so large p does not overflow
    return peak * float(np.sum((mag / peak) ** p) * cell) ** (1.0 / p)


def norm_lp(f: SpectralVectorField, p: float) -> float:
    """L^p norm by uniform-grid quadrature of |f|^p; p = inf gives :func:`norm_sup`."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if np.isinf(p):
        return norm_sup(f)
    return lp_of_values(to_physical(f.coeffs), p, f.grid.length)


def norm_sup(f: SpectralVectorField) -> float:
    """Max of |f| evaluated on the 2x zero-padded grid."""
    return float(np.max(pointwise_magnitude(padded_values(f.coeffs, 2))))


def norm_grad_lp(f: SpectralVectorField, r: float) -> float:
    """L^r norm of the Frobenius magnitude of the gradient tensor."""
    g = gradient(f)
    if np.isinf(r):
        return float(np.max(pointwise_magnitude(padded_values(g, 2))))
    return lp_of_values(to_physical(g), r, f.grid.length)


def random_solenoidal(grid: Grid, k0: float, seed, amplitude: float = 1.0) -> SpectralVectorField:
    """Seeded random mean-zero solenoidal field with envelope |k|^3 exp(-|k|^2/k0^2).

    The field is built from a stream function with uniformly random phases,
    Hermitian-symmetrized, Leray projected, dealiased and renormalized to
    ``norm_l2 == amplitude``.  ``seed`` may be an int, a
    ``numpy.random.SeedSequence`` or a ``numpy.random.Generator`` (PCG64).
    """
    if not 0 < k0 <= grid.dealias_cutoff:
        raise ValueError(f"k0={k0} outside the resolved band (0, {grid.dealias_cutoff:.4g}]")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.Generator(np.random.PCG64(seed))
    k2 = grid.k_squared
    kmag = np.sqrt(k2)
    envelope = kmag**3 * np.exp(-k2 / k0**2)
    phases = np.exp(2j * np.pi * rng.random((grid.n, grid.n)))
    inv_k = np.zeros_like(kmag)
    np.divide(1.0, kmag, out=inv_k, where=kmag > 0)
    psi = envelope * inv_k * phases
    psi = 0.5 * (psi + np.conj(reflect(psi)))
    kx, ky = grid.derivative_wavenumbers
    c = np.stack([1j * ky * psi, -1j * kx * psi])
    c = project_coeffs(grid, c) * grid.dealias_mask
    _zero_nyquist(c)
    c[:, 0, 0] = 0.0
    u = SpectralVectorField(grid, c)
    norm = norm_l2(u)
    if norm == 0.0:
        raise ValueError("generated field vanished; increase k0 or n")
    return u * (amplitude / norm)


def _zero_nyquist(c: np.ndarray) -> None:
    h = c.shape[-1] // 2
    c[..., h, :] = 0.0
    c[..., :, h] = 0.0


def ensemble_seeds(base_seed: int, count: int) -> list[np.random.SeedSequence]:
    """Independent child streams for ensemble members (``SeedSequence.spawn``).

    Member ``i`` always receives child ``i`` of ``SeedSequence(base_seed)``, so
    results do not depend on how members are scheduled across workers.
    """
    return np.random.SeedSequence(base_seed).spawn(count)


def point_vortex(grid: Grid, k_cut: float, amplitude: float = 1.0) -> SpectralVectorField:
    """Smoothed point vortex at the origin: |u_hat(k)| proportional to exp(-|k|^2/k_cut^2)/|k|.

    All coefficients share one phase, so the velocity profile is coherent and
    behaves like 1/|x| between the cutoff scale and the box size.
    """
    k2 = grid.k_squared
    psi = np.zeros_like(k2)
    np.divide(np.exp(-k2 / k_cut**2), k2, out=psi, where=k2 > 0)
    kx, ky = grid.derivative_wavenumbers
    c = np.stack([1j * ky * psi, -1j * kx * psi]) * grid.dealias_mask
    _zero_nyquist(c)
    u = SpectralVectorField(grid, c)
    return u * (amplitude / norm_l2(u))


def gaussian_bump(grid: Grid, mass: float, width: float, center=None) -> SpectralVectorField:
    """Leray projection of g(x) e_1 with g a periodized Gaussian of integral ``mass``.

    The mean mode is removed.  ``width`` must be resolved by at least four grid
    spacings.
    """
    if width < 4 * grid.spacing:
        raise ValueError(f"width {width:.4g} under-resolved (need >= {4 * grid.spacing:.4g})")
    if center is None:
        center = (grid.length / 2, grid.length / 2)
    kx, ky = grid.wavenumbers
    ghat = mass / grid.length**2 * np.exp(-0.5 * width**2 * grid.k_squared)
    ghat = ghat * np.exp(-1j * (kx * center[0] + ky * center[1]))
    c = np.zeros((2, grid.n, grid.n), dtype=np.complex128)
    c[0] = ghat
    _zero_nyquist(c)
    c = project_coeffs(grid, c)
    c[:, 0, 0] = 0.0
    return SpectralVectorField(grid, c)


def save_snapshot(path, f: SpectralVectorField) -> None:
    """Write a field snapshot: header ``NS2F`` then little-endian complex f64 pairs."""
    flags = 0
    if f.is_solenoidal():
        flags |= FLAG_SOLENOIDAL
    if f.is_mean_zero():
        flags |= FLAG_MEAN_ZERO
    header = SNAPSHOT_MAGIC + struct.pack("<IIdI", SNAPSHOT_VERSION, f.grid.n, f.grid.length, flags)
    body = np.ascontiguousarray(f.coeffs).astype("<c16").tobytes()
    Path(path).write_bytes(header + body)


def load_snapshot(path, dealias_fraction: float = 2.0 / 3.0) -> tuple[SpectralVectorField, int]:
    """Read a snapshot written by :func:`save_snapshot`; returns ``(field, flags)``."""
    data = Path(path).read_bytes()
    if data[:4] != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: bad magic {data[:4]!r}")
    version, n, length, flags = struct.unpack("<IIdI", data[4:24])
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    expected = 24 + 2 * n * n * 16
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(data)}")
    c = np.frombuffer(data[24:], dtype="<c16").reshape(2, n, n)
    return SpectralVectorField(Grid(n, length, dealias_fraction), c), flags
