"""Linearized direct EIT reconstruction from electrode voltage frames.

Pipeline: normalize current/voltage patterns, expand complex exponential
harmonic traces in those patterns, form the frequency-domain perturbation
estimate F(k) on a truncated grid, and synthesize the image with a
composite-Simpson inverse Fourier transform on [-1, 1]^2.

Units: electrode width and area enter the F(k) formula in unit-disk
normalized form (the ratio width/area then equals tank_radius/depth).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import j1

from calderon_eit.fem import (CurrentPatternSet, ElectrodeLayout,
                              MeasurementFrame, trig_current_patterns)
from calderon_eit.grids import disk_mask, pixel_coords

SVD_CUTOFF = 1e-12
DEFAULT_RADIUS = 1.3
DEFAULT_GRID_POINTS = 33


class ExpansionError(ValueError):
    """Basis expansion of a boundary trace failed."""


@dataclass(frozen=True)
class NormalizedPatterns:
    """Current rows scaled to unit norm and voltages scaled by the same norms."""

    currents: np.ndarray
    voltages: np.ndarray


def normalize_patterns(patterns: CurrentPatternSet,
                       frame: MeasurementFrame) -> NormalizedPatterns:
    T = np.asarray(patterns.rows)
    V = np.asarray(frame.voltages)
    if T.shape != V.shape:
        raise ValueError(f"pattern shape {T.shape} != voltage shape {V.shape}")
    norms = np.linalg.norm(T, axis=1)
    if norms.min() == 0:
        raise ExpansionError("zero-norm current pattern cannot be normalized")
    return NormalizedPatterns(currents=T / norms[:, None],
                              voltages=V / norms[:, None])


def cgo_field(points: np.ndarray, k, which: int = 1) -> np.ndarray:
    """Complex exponential harmonic exp(pi*i*k.x +/- pi*kperp.x) at points."""
    k = np.asarray(k, dtype=float)
    if np.hypot(k[0], k[1]) == 0:
        raise ValueError("frequency k must be nonzero")
    if which not in (1, 2):
        raise ValueError("which must be 1 or 2")
    kperp = np.array([-k[1], k[0]])
    pts = np.atleast_2d(points)
    sign = 1.0 if which == 1 else -1.0
    return np.exp(np.pi * (1j * (pts @ k) + sign * (pts @ kperp)))


def cgo_trace(layout: ElectrodeLayout, k, which: int = 1) -> np.ndarray:
    """The harmonic evaluated at the electrode midpoints on the unit circle."""
    return cgo_field(layout.midpoints, k, which)


def expand_coefficients(trace: np.ndarray, basis_rows: np.ndarray,
                        rcond: float = SVD_CUTOFF) -> np.ndarray:
    """Least-squares coefficients of ``trace`` in the span of ``basis_rows``."""
    basis = np.asarray(basis_rows)
    coeffs, _, rank, _ = np.linalg.lstsq(basis.T, np.asarray(trace), rcond=rcond)
    if rank < basis.shape[0]:
        raise ExpansionError(
            f"basis is rank deficient: rank {rank} < {basis.shape[0]} rows")
    return coeffs


def _prefactor(k, layout: ElectrodeLayout) -> float:
    k = np.asarray(k, dtype=float)
    mod2 = float(k[0] ** 2 + k[1] ** 2)
    if mod2 == 0:
        raise ValueError("frequency k must be nonzero")
    return layout.arc / (2.0 * math.pi**2 * layout.area * mod2)


def fhat_difference(a_k: np.ndarray, t_gram: np.ndarray, b_k_gamma: np.ndarray,
                    b_k_ref: np.ndarray, k, layout: ElectrodeLayout) -> complex:
    """Frequency sample from a measured frame minus a reference frame."""
    return complex(-_prefactor(k, layout)
                   * (a_k @ t_gram @ (b_k_gamma - b_k_ref)))


def fhat_absolute(a_k: np.ndarray, t_gram: np.ndarray, b_k_gamma: np.ndarray,
                  k, layout: ElectrodeLayout) -> complex:
    """Frequency sample with the homogeneous term supplied analytically."""
    return complex(-_prefactor(k, layout) * (a_k @ t_gram @ b_k_gamma)
                   - domain_exponential_integral(k))


def domain_exponential_integral(k) -> float:
    """Integral of exp(2*pi*i*k.x) over the unit disk (real for all k)."""
    k = np.asarray(k, dtype=float)
    mod = float(np.hypot(k[0], k[1]))
    if mod < 1e-12:
        return math.pi
    return float(j1(2.0 * math.pi * mod) / mod)


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform Cartesian grid on [-R, R]^2, masked to 0 < |k| <= R.

    The per-axis point count is odd so composite Simpson weights apply;
    the grid is symmetric under k -> -k and excludes k = 0.
    """

    radius: float
    points_per_axis: int = DEFAULT_GRID_POINTS

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise ValueError("truncation radius must be positive")
        if self.points_per_axis < 3 or self.points_per_axis % 2 == 0:
            raise ValueError("points_per_axis must be odd and >= 3")

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.radius, self.radius, self.points_per_axis)

    @property
    def step(self) -> float:
        return 2.0 * self.radius / (self.points_per_axis - 1)

    @property
    def mask(self) -> np.ndarray:
        ax = self.axis
        K1, K2 = np.meshgrid(ax, ax, indexing="ij")
        m = K1**2 + K2**2 <= self.radius**2 + 1e-12
        m[(self.points_per_axis - 1) // 2, (self.points_per_axis - 1) // 2] = False
        return m

    def k_points(self) -> np.ndarray:
        """Masked k samples as an array of shape (n_k, 2)."""
        ax = self.axis
        K1, K2 = np.meshgrid(ax, ax, indexing="ij")
        m = self.mask
        return np.column_stack([K1[m], K2[m]])


@dataclass(frozen=True)
class ScatteringData:
    """F(k) samples on a frequency grid; zero where the grid mask is off.

    ``values[i, j]`` belongs to k = (axis[i], axis[j]).
    """

    values: np.ndarray
    grid: FrequencyGrid

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.values)):
            raise ValueError("scattering data contains non-finite values")


@dataclass(frozen=True)
class ReconstructionImage:
    """Complex n x n pixel image over [-1, 1]^2."""

    values: np.ndarray
    radius: float
    mode: str
    background: complex

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def mask(self) -> np.ndarray:
        return disk_mask(self.n)


def _simpson_weights(m: int, step: float) -> np.ndarray:
    w = np.ones(m)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (step / 3.0)


def inverse_fourier_simpson(data: ScatteringData, grid: FrequencyGrid | None = None,
                            n: int = 64) -> ReconstructionImage:
    """Low-pass inverse Fourier synthesis on the pixel grid.

    Evaluates the truncated transform of F over the Cartesian k-box with
    composite Simpson weights per axis (F is zero outside |k| <= R and at
    k = 0). The returned image is the perturbation; the caller adds the
    background to obtain an admittivity image.
    """
    grid = grid or data.grid
    if n < 8:
        raise ValueError(f"pixel resolution must be >= 8, got {n}")
    m = grid.points_per_axis
    w = _simpson_weights(m, grid.step)
    weighted = data.values * np.outer(w, w)
    xs, ys = pixel_coords(n)
    ax = grid.axis
    Ex = np.exp(-2j * np.pi * np.outer(xs, ax))
    Ey = np.exp(-2j * np.pi * np.outer(ys, ax))
    delta = Ey @ weighted.T @ Ex.T
    return ReconstructionImage(values=delta, radius=grid.radius, mode="delta",
                               background=0.0)


def scattering_transform(frame: MeasurementFrame,
                         reference: MeasurementFrame | None = None,
                         radius: float = DEFAULT_RADIUS,
                         grid_points: int = DEFAULT_GRID_POINTS,
                         background: complex = 1.0) -> ScatteringData:
    """F(k) on the truncated grid, difference mode when a reference is given.

    Voltages are scaled by 1/background so the data describe a relative
    perturbation about 1; the caller maps the synthesized perturbation back
    with gamma = background * (1 + delta).
    """
    layout = frame.layout
    patterns = trig_current_patterns(layout.n_electrodes, frame.amplitude)
    norm = normalize_patterns(patterns, frame)
    t = norm.currents
    gram = t @ t.T
    v_gamma = norm.voltages / background
    basis_t = np.linalg.pinv(t.T, rcond=SVD_CUTOFF)
    basis_g = np.linalg.pinv(v_gamma.T, rcond=SVD_CUTOFF)
    basis_r = None
    if reference is not None:
        if reference.layout != layout:
            raise ValueError("reference frame layout differs from measurement")
        if reference.amplitude != frame.amplitude:
            raise ValueError("reference frame amplitude differs from measurement")
        ref_norm = normalize_patterns(
            trig_current_patterns(layout.n_electrodes, reference.amplitude),
            reference)
        basis_r = np.linalg.pinv(ref_norm.voltages.T / background,
                                 rcond=SVD_CUTOFF)

    grid = FrequencyGrid(radius=radius, points_per_axis=grid_points)
    mask = grid.mask
    values = np.zeros((grid_points, grid_points), dtype=complex)
    ax = grid.axis
    for i, j in zip(*np.nonzero(mask)):
        k = np.array([ax[i], ax[j]])
        phi1 = cgo_trace(layout, k, 1)
        phi2 = cgo_trace(layout, k, 2)
        a_k = basis_t @ phi1
        b_g = basis_g @ phi2
        if basis_r is not None:
            values[i, j] = fhat_difference(a_k, gram, b_g, basis_r @ phi2,
                                           k, layout)
        else:
            values[i, j] = fhat_absolute(a_k, gram, b_g, k, layout)
    return ScatteringData(values=values, grid=grid)


def reconstruct(frame: MeasurementFrame,
                reference: MeasurementFrame | None = None,
                radius: float = DEFAULT_RADIUS,
                grid_points: int = DEFAULT_GRID_POINTS,
                n: int = 64,
                background: complex = 1.0,
                mode: str | None = None) -> ReconstructionImage:
    """End-to-end admittivity image from one (or two) voltage frames.

    ``mode`` defaults to difference imaging when a reference frame is
    supplied and absolute imaging otherwise. Pixels outside the unit disk
    carry the background value.
    """
    if mode is None:
        mode = "difference" if reference is not None else "absolute"
    if mode not in ("difference", "absolute"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "difference" and reference is None:
        raise ValueError("difference mode needs a reference frame")
    data = scattering_transform(
        frame, reference if mode == "difference" else None,
        radius=radius, grid_points=grid_points, background=background)
    delta = inverse_fourier_simpson(data, data.grid, n)
    gamma = complex(background) * (1.0 + delta.values)
    gamma[~disk_mask(n)] = complex(background)
    return ReconstructionImage(values=gamma, radius=radius, mode=mode,
                               background=complex(background))


IMAGE_MAGIC = "dcm-img-1"


def write_image(image, path) -> None:
    """Serialize an image: text header, float32 LE real plane then imag plane."""
    values = np.asarray(image.values, dtype=complex)
    mode = getattr(image, "mode", "truth")
    radius = getattr(image, "radius", 0.0)
    bg = complex(getattr(image, "background", 0.0))
    header = "\n".join([
        IMAGE_MAGIC,
        f"pixels {values.shape[0]}",
        f"radius {radius:.17g}",
        f"mode {mode}",
        f"background {bg.real:.17g} {bg.imag:.17g}",
        "end",
    ]) + "\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(values.real.astype("<f4").tobytes())
        fh.write(values.imag.astype("<f4").tobytes())


def read_image(path) -> ReconstructionImage:
    with open(path, "rb") as fh:
        blob = fh.read()
    end = blob.index(b"end\n") + 4
    lines = blob[:end].decode("ascii").splitlines()
    if lines[0] != IMAGE_MAGIC:
        raise ValueError(f"not a {IMAGE_MAGIC} file: {path}")
    fields = dict(line.split(None, 1) for line in lines[1:-1])
    n = int(fields["pixels"])
    raw = np.frombuffer(blob[end:], dtype="<f4")
    if raw.size != 2 * n * n:
        raise ValueError(f"image payload truncated in {path}")
    re = raw[:n * n].reshape(n, n).astype(float)
    im = raw[n * n:].reshape(n, n).astype(float)
    bg_re, bg_im = (float(v) for v in fields["background"].split())
    return ReconstructionImage(values=re + 1j * im, radius=float(fields["radius"]),
                               mode=fields["mode"],
                               background=bg_re + 1j * bg_im)
