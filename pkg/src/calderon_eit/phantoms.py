"""Randomized admittivity phantoms on the unit disk.

Four families: a chest phantom with no pathology (case A), chest phantoms
with a high- or low-conductivity pathology inside one lung (cases B/C),
and three complex-valued inclusions (case D). All generators are pure
functions of (templates, configuration, seed).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np

from calderon_eit.fem import ConductivityField, TriMesh
from calderon_eit.grids import disk_mask, pixel_centers

TEMPLATE_MAGIC = "dcm-organs-1"
MAX_PLACEMENT_RETRIES = 100

# Nominal admittivities (S/m) and jitter fractions.
CASE_A_BACKGROUND = 0.3
CASE_A_SIZE_JITTER = {"heart": 0.10, "left_lung": 0.15, "right_lung": 0.15}
CASE_A_VALUE_JITTER = {"left_lung": 0.30, "right_lung": 0.30, "heart": 0.20,
                       "background": 0.10}

CASE_BC_BACKGROUND = 0.19
CASE_BC_VALUES = {"left_lung": 0.123, "right_lung": 0.123, "heart": 0.323}
CASE_BC_SIZE_JITTER = {"heart": 0.10, "left_lung": 0.25, "right_lung": 0.25}
CASE_BC_VALUE_JITTER = {"left_lung": 0.20, "right_lung": 0.20, "heart": 0.15}
PATHOLOGY_VALUES = {"high": 0.8, "low": 0.01}
PATHOLOGY_DIAMETER_M = 0.022

CASE_D_BACKGROUND = 0.18
CASE_D_INCLUSION = 0.23 + 0.01j
CASE_D_DIAMETER_M = 0.049
CASE_D_RADIUS_BANDS = ((0.0, 0.15), (0.3, 0.45), (0.6, 0.75))
CASE_D_VALUE_JITTER = 0.10

TANK_RADIUS_M = 0.15


class PhantomError(ValueError):
    """Phantom construction failure."""


@dataclass(frozen=True)
class OrganBoundary:
    """Closed polyline with a constant complex admittivity inside."""

    name: str
    points: np.ndarray
    admittivity: complex

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
            raise PhantomError(f"organ {self.name}: need >= 3 boundary points")
        if np.hypot(pts[:, 0], pts[:, 1]).max() > 1.0:
            raise PhantomError(f"organ {self.name}: boundary leaves the unit disk")
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class Phantom:
    """Background admittivity plus ordered organs (later organs overwrite)."""

    background: complex
    organs: tuple[OrganBoundary, ...]
    case: str
    seed: int | None = None

    @property
    def is_real(self) -> bool:
        return complex(self.background).imag == 0 and all(
            complex(o.admittivity).imag == 0 for o in self.organs)


@dataclass(frozen=True)
class RasterImage:
    """Pixel image of a phantom over [-1, 1]^2; outside-disk pixels = background."""

    values: np.ndarray
    background: complex
    case: str | None = None

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def mask(self) -> np.ndarray:
        return disk_mask(self.n)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def points_in_polygon(points: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Vectorized even-odd (ray casting) containment test."""
    x, y = points[:, 0], points[:, 1]
    px, py = poly[:, 0], poly[:, 1]
    qx, qy = np.roll(px, -1), np.roll(py, -1)
    inside = np.zeros(len(points), dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        for i in range(len(poly)):
            crosses = (py[i] > y) != (qy[i] > y)
            x_cross = px[i] + (qx[i] - px[i]) * (y - py[i]) / (qy[i] - py[i])
            inside ^= crosses & (x < x_cross)
    return inside


def disc_polygon(center, radius: float, n_points: int = 32) -> np.ndarray:
    t = 2.0 * np.pi * np.arange(n_points) / n_points
    return np.column_stack([center[0] + radius * np.cos(t),
                            center[1] + radius * np.sin(t)])


def organ_center(boundary: OrganBoundary) -> np.ndarray:
    """Mean of the parameterized boundary points."""
    return boundary.points.mean(axis=0)


def vary_organ_size(boundary: OrganBoundary, variation: float,
                    seed) -> OrganBoundary:
    """Scale the boundary about its center by one uniform factor.

    The factor is drawn from [1 - variation, 1 + variation]; if the scaled
    organ leaves the unit disk the factor is resampled a bounded number of
    times before failing.
    """
    if not 0.0 <= variation < 1.0:
        raise PhantomError(f"size variation must lie in [0, 1), got {variation}")
    rng = _rng(seed)
    center = organ_center(boundary)
    offsets = boundary.points - center
    for _ in range(MAX_PLACEMENT_RETRIES):
        factor = rng.uniform(1.0 - variation, 1.0 + variation)
        scaled = center + factor * offsets
        if np.hypot(scaled[:, 0], scaled[:, 1]).max() <= 1.0:
            return replace(boundary, points=scaled)
    raise PhantomError(
        f"organ {boundary.name}: scaled boundary keeps escaping the unit disk")


def _jitter_value(nominal: complex, fraction: float,
                  rng: np.random.Generator) -> complex:
    """Uniform multiplicative jitter, one common factor for re and im parts."""
    factor = rng.uniform(1.0 - fraction, 1.0 + fraction)
    value = complex(nominal) * factor
    return value.real if value.imag == 0 else value


def load_organ_templates(path=None) -> dict[str, OrganBoundary]:
    """Read the organ template file (named polylines plus nominal values)."""
    text = _template_text(path)
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    if lines[0] != TEMPLATE_MAGIC:
        raise PhantomError(f"not a {TEMPLATE_MAGIC} template file")
    organs: dict[str, OrganBoundary] = {}
    i = 1
    while i < len(lines):
        _, name = lines[i].split()
        _, re_s, im_s = lines[i + 1].split()
        _, count_s = lines[i + 2].split()
        count = int(count_s)
        pts = np.array([[float(v) for v in lines[i + 3 + j].split()]
                        for j in range(count)])
        value = float(re_s) + 1j * float(im_s)
        organs[name] = OrganBoundary(
            name=name, points=pts,
            admittivity=value.real if value.imag == 0 else value)
        i += 3 + count
    return organs


def _template_text(path=None) -> str:
    if path is not None:
        with open(path, "r", encoding="ascii") as fh:
            return fh.read()
    return resources.files("calderon_eit.data").joinpath(
        "chest_templates.txt").read_text(encoding="ascii")


def template_checksum(path=None) -> str:
    return hashlib.sha256(_template_text(path).encode("ascii")).hexdigest()


def chest_phantom_case_a(seed: int, jitter: bool = True,
                         templates: dict[str, OrganBoundary] | None = None) -> Phantom:
    """Chest phantom: two lungs, heart, aorta and spine in a saline background.

    With ``jitter`` the heart and lungs get size variation (10% / 15%) and
    the lungs, heart and background get conductivity variation (30% / 20% /
    10%); the aorta and spine stay fixed.
    """
    organs = dict(templates or load_organ_templates())
    rng = _rng(seed)
    background = CASE_A_BACKGROUND
    if jitter:
        for name, frac in CASE_A_SIZE_JITTER.items():
            organs[name] = vary_organ_size(organs[name], frac, rng)
        for name, frac in CASE_A_VALUE_JITTER.items():
            if name == "background":
                background = _jitter_value(background, frac, rng)
            else:
                organs[name] = replace(
                    organs[name],
                    admittivity=_jitter_value(organs[name].admittivity, frac, rng))
    order = ("left_lung", "right_lung", "heart", "aorta", "spine")
    return Phantom(background=background,
                   organs=tuple(organs[name] for name in order),
                   case="A", seed=seed if isinstance(seed, int) else None)


def pathology_center(lung: OrganBoundary, r: float, boundary_index: int) -> np.ndarray:
    """Convex combination of the lung center and one boundary point."""
    c = organ_center(lung)
    b = lung.points[boundary_index]
    return c + r * (b - c)


def chest_phantom_pathology(seed: int, kind: str = "none", jitter: bool = True,
                            templates: dict[str, OrganBoundary] | None = None,
                            tank_radius: float = TANK_RADIUS_M) -> Phantom:
    """Chest phantom with an optional circular pathology inside one lung.

    ``kind`` selects no pathology, a high-conductivity disc (0.8 S/m) or a
    low-conductivity disc (0.01 S/m), 2.2 cm in diameter. The disc center
    is c + r*(b - c) for a uniform r in [0, 1], a uniformly chosen boundary
    point b of a uniformly chosen lung, so it may overlap the lung boundary.
    """
    if kind not in ("none", "high", "low"):
        raise PhantomError(f"unknown pathology kind {kind!r}")
    base = templates or load_organ_templates()
    organs = {name: replace(base[name], admittivity=CASE_BC_VALUES[name])
              for name in ("left_lung", "right_lung", "heart")}
    rng = _rng(seed)
    if jitter:
        for name, frac in CASE_BC_SIZE_JITTER.items():
            organs[name] = vary_organ_size(organs[name], frac, rng)
        for name, frac in CASE_BC_VALUE_JITTER.items():
            organs[name] = replace(
                organs[name],
                admittivity=_jitter_value(organs[name].admittivity, frac, rng))
    ordered = [organs["left_lung"], organs["right_lung"], organs["heart"]]
    if kind != "none":
        lung = ordered[int(rng.integers(2))]
        idx = int(rng.integers(len(lung.points)))
        r = rng.uniform(0.0, 1.0)
        center = pathology_center(lung, r, idx)
        radius = 0.5 * PATHOLOGY_DIAMETER_M / tank_radius
        ordered.append(OrganBoundary(
            name="pathology", points=disc_polygon(center, radius),
            admittivity=PATHOLOGY_VALUES[kind]))
    case = {"none": "B", "high": "B", "low": "C"}[kind]
    return Phantom(background=CASE_BC_BACKGROUND, organs=tuple(ordered),
                   case=case, seed=seed if isinstance(seed, int) else None)


def cucumber_phantom(seed: int, jitter: bool = True,
                     tank_radius: float = TANK_RADIUS_M) -> Phantom:
    """Three equal complex-valued discs at staggered radial bands.

    Disc centers use polar radii drawn from [0, 0.15], [0.3, 0.45] and
    [0.6, 0.75] with uniform angles; angles are resampled if discs would
    overlap. Some radial draws from the inner two bands leave the discs
    closer than one diameter at every angle, so the radii are redrawn when
    angle retries run out. Admittivity 0.23 + 0.01i with a 10%
    common-factor jitter per inclusion; the disc size is fixed at 4.9 cm
    diameter.
    """
    rng = _rng(seed)
    radius = 0.5 * CASE_D_DIAMETER_M / tank_radius
    centers = _place_inclusions(rng, radius)
    organs = []
    for j, center in enumerate(centers):
        value = (CASE_D_INCLUSION if not jitter
                 else _jitter_value(CASE_D_INCLUSION, CASE_D_VALUE_JITTER, rng))
        organs.append(OrganBoundary(
            name=f"inclusion_{j}", points=disc_polygon(center, radius),
            admittivity=value))
    return Phantom(background=CASE_D_BACKGROUND, organs=tuple(organs),
                   case="D", seed=seed if isinstance(seed, int) else None)


def _place_inclusions(rng: np.random.Generator, radius: float) -> np.ndarray:
    iu = np.triu_indices(3, k=1)
    for _ in range(MAX_PLACEMENT_RETRIES):
        radial = np.array([rng.uniform(lo, hi) for lo, hi in CASE_D_RADIUS_BANDS])
        for _ in range(MAX_PLACEMENT_RETRIES):
            angles = rng.uniform(0.0, 2.0 * np.pi, size=3)
            centers = np.column_stack([radial * np.cos(angles),
                                       radial * np.sin(angles)])
            dists = np.hypot(*(centers[:, None, :] - centers[None, :, :]
                               ).transpose(2, 0, 1))
            if (dists[iu] >= 2.0 * radius).all():
                return centers
    raise PhantomError("could not place three non-overlapping inclusions")


def rasterize(phantom: Phantom, n: int) -> RasterImage:
    """Pixel-center point-in-polygon rasterization on [-1, 1]^2."""
    if n < 8:
        raise PhantomError(f"raster resolution must be >= 8, got {n}")
    pts = pixel_centers(n)
    values = np.full(n * n, complex(phantom.background), dtype=complex)
    for organ in phantom.organs:
        inside = points_in_polygon(pts, organ.points)
        values[inside] = complex(organ.admittivity)
    values = values.reshape(n, n)
    values[~disk_mask(n)] = complex(phantom.background)
    return RasterImage(values=values, background=complex(phantom.background),
                       case=phantom.case)


def phantom_to_field(phantom: Phantom, mesh: TriMesh) -> ConductivityField:
    """Per-element admittivity by element-centroid membership."""
    centroids = mesh.element_centroids()
    values = np.full(len(centroids), complex(phantom.background), dtype=complex)
    for organ in phantom.organs:
        inside = points_in_polygon(centroids, organ.points)
        values[inside] = complex(organ.admittivity)
    if phantom.is_real:
        values = values.real
    return ConductivityField(values=values, background=complex(phantom.background))
