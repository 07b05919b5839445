"""Finite-element forward model for EIT on the unit disk.

Solves the conductivity equation div(gamma grad u) = 0 with gap-model
electrode currents and produces simulated electrode voltage frames for a
set of current patterns. The geometry is normalized to the unit disk:
physical electrode dimensions are divided by the tank radius (lengths)
and by the tank radius squared (areas) before they enter the model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.sparse import bmat, csc_matrix, csr_matrix
from scipy.sparse.linalg import LinearOperator, onenormest, splu
from scipy.spatial import Delaunay

RESIDUAL_TOL = 1e-10
COMPAT_TOL = 1e-6


class MeshError(ValueError):
    """Mesh construction or validation failure."""


class SolverError(RuntimeError):
    """Forward solve failed (incompatible flux or degenerate system)."""


@dataclass(frozen=True)
class ElectrodeLayout:
    """Ring of identical electrodes on a circular tank boundary.

    Midpoint angles are theta_l = 2*pi*l/L for l = 1..L. ``width`` is the
    electrode arc length and ``depth`` the bath depth, both in meters;
    ``arc`` and ``area`` are the same quantities rescaled to the unit disk.
    """

    n_electrodes: int = 32
    width: float = 0.0254
    depth: float = 0.01
    tank_radius: float = 0.15

    def __post_init__(self) -> None:
        L = self.n_electrodes
        if L < 4 or L % 2 != 0:
            raise ValueError(f"electrode count must be even and >= 4, got {L}")
        if min(self.width, self.depth, self.tank_radius) <= 0:
            raise ValueError("electrode dimensions must be positive")
        if L * self.arc >= 2 * math.pi:
            raise ValueError("electrodes overlap: total width exceeds circumference")

    @property
    def arc(self) -> float:
        """Electrode arc length on the unit circle."""
        return self.width / self.tank_radius

    @property
    def area(self) -> float:
        """Electrode area in normalized units (width * depth / radius^2)."""
        return self.width * self.depth / self.tank_radius**2

    @property
    def theta(self) -> np.ndarray:
        L = self.n_electrodes
        return 2.0 * np.pi * np.arange(1, L + 1) / L

    @property
    def midpoints(self) -> np.ndarray:
        """Electrode midpoint coordinates on the unit circle, shape (L, 2)."""
        th = self.theta
        return np.column_stack([np.cos(th), np.sin(th)])


@dataclass(frozen=True)
class TriMesh:
    """Triangulated unit disk with an electrode-aligned boundary loop.

    ``boundary_nodes`` lists node indices ordered counterclockwise;
    boundary edge e joins boundary node e and e+1 (cyclically) and carries
    ``edge_electrode[e]`` (electrode index, or -1 in a gap).
    """

    nodes: np.ndarray
    elements: np.ndarray
    boundary_nodes: np.ndarray
    boundary_theta: np.ndarray
    edge_electrode: np.ndarray
    layout: ElectrodeLayout

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.column_stack([self.boundary_nodes, np.roll(self.boundary_nodes, -1)])

    @property
    def edge_arcs(self) -> np.ndarray:
        """Arc length subtended by each boundary edge."""
        th = self.boundary_theta
        d = np.diff(th, append=th[0] + 2.0 * np.pi)
        return d

    @property
    def edge_midpoint_theta(self) -> np.ndarray:
        th = self.boundary_theta
        mid = th + 0.5 * self.edge_arcs
        return np.mod(mid, 2.0 * np.pi)

    def element_areas(self) -> np.ndarray:
        p = self.nodes[self.elements]
        return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                      - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))

    def element_centroids(self) -> np.ndarray:
        return self.nodes[self.elements].mean(axis=1)

    def validate(self) -> None:
        r = np.hypot(self.nodes[:, 0], self.nodes[:, 1])
        if r.max() > 1.0 + 1e-9:
            raise MeshError("mesh nodes outside the unit circle")
        areas = self.element_areas()
        if areas.min() <= 0:
            raise MeshError("mesh contains non-positively-oriented elements")
        if len(np.unique(self.boundary_nodes)) != len(self.boundary_nodes):
            raise MeshError("boundary loop visits a node twice")


def build_disk_mesh(target_edge_length: float, layout: ElectrodeLayout) -> TriMesh:
    """Mesh the unit disk so each electrode covers a whole number of edges.

    Boundary nodes include every electrode endpoint; interior nodes sit on
    staggered concentric rings with spacing close to ``target_edge_length``
    and the triangulation is the Delaunay triangulation of that point set.
    """
    h = float(target_edge_length)
    if not 0.0 < h < 0.5:
        raise MeshError(f"target edge length must lie in (0, 0.5), got {h}")
    L = layout.n_electrodes
    arc = layout.arc
    per_elec = int(round(arc / h))
    if per_elec < 2:
        raise MeshError(
            f"edge length {h} too coarse: fewer than 2 edges per electrode "
            f"(electrode arc {arc:.4f})")
    gap = 2.0 * math.pi / L - arc
    per_gap = max(1, int(round(gap / h)))

    angles = []
    labels = []
    for l in range(L):
        start = layout.theta[l] - 0.5 * arc
        for j in range(per_elec):
            angles.append(start + arc * j / per_elec)
            labels.append(l)
        gstart = layout.theta[l] + 0.5 * arc
        for j in range(per_gap):
            angles.append(gstart + gap * j / per_gap)
            labels.append(-1)
    theta_b = np.asarray(angles)
    edge_electrode = np.asarray(labels, dtype=int)
    n_b = theta_b.size

    points = [np.column_stack([np.cos(theta_b), np.sin(theta_b)])]
    n_rings = max(2, int(round(1.0 / h)))
    for j in range(1, n_rings):
        r = 1.0 - j / n_rings
        m = max(6, int(round(2.0 * math.pi * r / h)))
        ang = 2.0 * math.pi * (np.arange(m) + 0.5 * (j % 2)) / m
        points.append(np.column_stack([r * np.cos(ang), r * np.sin(ang)]))
    points.append(np.zeros((1, 2)))
    nodes = np.vstack(points)

    tri = Delaunay(nodes)
    elements = tri.simplices.copy()
    p = nodes[elements]
    signed = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                    - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
    flip = signed < 0
    elements[flip] = elements[flip][:, [0, 2, 1]]

    # The hull of the point set must be exactly the boundary loop.
    hull = {tuple(sorted(e)) for e in tri.convex_hull}
    loop = {tuple(sorted((i, (i + 1) % n_b))) for i in range(n_b)}
    if hull != loop:
        raise MeshError("triangulation hull does not match the boundary loop")

    mesh = TriMesh(
        nodes=nodes,
        elements=elements,
        boundary_nodes=np.arange(n_b),
        boundary_theta=theta_b,
        edge_electrode=edge_electrode,
        layout=layout,
    )
    mesh.validate()
    return mesh


@dataclass(frozen=True)
class CurrentPatternSet:
    """L-1 linearly independent current patterns, one per row (amperes)."""

    rows: np.ndarray
    amplitude: float

    @property
    def n_electrodes(self) -> int:
        return self.rows.shape[1]

    def max_row_imbalance(self) -> float:
        return float(np.abs(self.rows.sum(axis=1)).max())


def trig_current_patterns(n_electrodes: int, amplitude: float) -> CurrentPatternSet:
    """Trigonometric current patterns on L electrodes.

    Row i is M*cos(i*theta_l) for i < L/2, M*cos(pi*l) at i = L/2 and
    M*sin((i - L/2)*theta_l) above, for l = 1..L. Every row sums to zero.
    """
    L = int(n_electrodes)
    if L < 4 or L % 2 != 0:
        raise ValueError(f"electrode count must be even and >= 4, got {L}")
    if amplitude <= 0:
        raise ValueError("current amplitude must be positive")
    l = np.arange(1, L + 1)
    theta = 2.0 * np.pi * l / L
    rows = np.empty((L - 1, L))
    for i in range(1, L):
        if i < L // 2:
            rows[i - 1] = np.cos(i * theta)
        elif i == L // 2:
            rows[i - 1] = np.cos(np.pi * l)
        else:
            rows[i - 1] = np.sin((i - L // 2) * theta)
    return CurrentPatternSet(rows=amplitude * rows, amplitude=float(amplitude))


@dataclass(frozen=True)
class GapFlux:
    """Gap-model boundary current density: t_l / A on electrode l, 0 in gaps."""

    densities: np.ndarray
    layout: ElectrodeLayout

    def __call__(self, theta: np.ndarray) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        rel = theta[:, None] - self.layout.theta[None, :]
        rel = np.mod(rel + np.pi, 2.0 * np.pi) - np.pi
        inside = np.abs(rel) <= 0.5 * self.layout.arc + 1e-12
        return inside @ self.densities

    def total_current(self) -> complex:
        return complex(self.densities.sum() * self.layout.arc)

    @property
    def supported_electrodes(self) -> np.ndarray:
        return np.nonzero(self.densities != 0)[0]


def gap_boundary_flux(pattern_row: np.ndarray, layout: ElectrodeLayout) -> GapFlux:
    row = np.asarray(pattern_row)
    if row.shape != (layout.n_electrodes,):
        raise ValueError(
            f"pattern row has {row.shape} entries, layout has {layout.n_electrodes}")
    return GapFlux(densities=row / layout.area, layout=layout)


@dataclass(frozen=True)
class ConductivityField:
    """Per-element complex admittivity sigma + i*omega*eps on a mesh."""

    values: np.ndarray
    background: complex

    def __post_init__(self) -> None:
        if np.asarray(self.values).real.min() <= 0 or complex(self.background).real <= 0:
            raise ValueError("admittivity must have positive real part")

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.values)


def uniform_field(mesh: TriMesh, value: complex) -> ConductivityField:
    val = complex(value)
    if val.imag == 0:
        values = np.full(len(mesh.elements), val.real)
    else:
        values = np.full(len(mesh.elements), val)
    return ConductivityField(values=values, background=val)


def _stiffness(mesh: TriMesh, values: np.ndarray) -> csr_matrix:
    """P1 stiffness matrix for div(gamma grad u)."""
    elems = mesh.elements
    p = mesh.nodes[elems]
    x, y = p[:, :, 0], p[:, :, 1]
    # Gradients of the barycentric basis: b_i = dy_jk / 2A, c_i = dx_kj / 2A.
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    area = 0.5 * (b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0])
    coef = values / (4.0 * area)
    local = coef[:, None, None] * (b[:, :, None] * b[:, None, :]
                                   + c[:, :, None] * c[:, None, :])
    rows = np.repeat(elems, 3, axis=1).ravel()
    cols = np.tile(elems, (1, 3)).ravel()
    n = len(mesh.nodes)
    K = csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))
    K.sum_duplicates()
    return K


def _boundary_load(mesh: TriMesh, flux) -> np.ndarray:
    """Load vector for Neumann data, midpoint rule on boundary arcs."""
    mids = mesh.edge_midpoint_theta
    dens = np.asarray(flux(mids))
    arcs = mesh.edge_arcs
    contrib = 0.5 * dens * arcs
    n = len(mesh.nodes)
    b = np.zeros(n, dtype=complex if np.iscomplexobj(dens) else float)
    edges = mesh.boundary_edges
    np.add.at(b, edges[:, 0], contrib)
    np.add.at(b, edges[:, 1], contrib)
    return b


def electrode_averages(mesh: TriMesh, u: np.ndarray) -> np.ndarray:
    """Arc-averaged potential on each electrode."""
    L = mesh.layout.n_electrodes
    edges = mesh.boundary_edges
    arcs = mesh.edge_arcs
    vals = 0.5 * (u[edges[:, 0]] + u[edges[:, 1]]) * arcs
    sums = np.zeros(L, dtype=vals.dtype)
    lens = np.zeros(L)
    on = mesh.edge_electrode >= 0
    np.add.at(sums, mesh.edge_electrode[on], vals[on])
    np.add.at(lens, mesh.edge_electrode[on], arcs[on])
    return sums / lens


def _condition_estimate(lu, A) -> float:
    n = A.shape[0]
    inv = LinearOperator((n, n), matvec=lu.solve, dtype=A.dtype)
    try:
        return float(onenormest(A) * onenormest(inv))
    except Exception:
        return float("nan")


class _GroundedSolver:
    """Factorized pure-Neumann system with a zero-mean Lagrange multiplier."""

    def __init__(self, mesh: TriMesh, gamma: ConductivityField):
        if np.asarray(gamma.values).shape != (len(mesh.elements),):
            raise ValueError("conductivity field does not match the mesh")
        self.mesh = mesh
        K = _stiffness(mesh, np.asarray(gamma.values))
        n = K.shape[0]
        w = np.full(n, 1.0 / n)
        A = bmat([[K, csc_matrix(w[:, None])],
                  [csc_matrix(w[None, :]), None]], format="csc")
        if np.iscomplexobj(K.data):
            A = A.astype(complex)
        self.K = K
        self.w = w
        self.A = A
        try:
            self.lu = splu(A)
        except RuntimeError as exc:
            raise SolverError(
                f"stiffness system is singular ({exc}); "
                f"|K|_1 ~ {onenormest(K):.3e}") from exc

    def solve(self, flux) -> np.ndarray:
        mesh = self.mesh
        mids = mesh.edge_midpoint_theta
        dens = np.asarray(flux(mids))
        total = (dens * mesh.edge_arcs).sum()
        scale = (np.abs(dens) * mesh.edge_arcs).sum()
        if scale > 0 and abs(total) > COMPAT_TOL * scale:
            raise SolverError(
                f"boundary flux incompatible: net injected current {total:.3e} "
                f"exceeds {COMPAT_TOL:g} of the flux magnitude {scale:.3e}")
        b = _boundary_load(mesh, flux)
        rhs = np.append(b, 0.0)
        if np.iscomplexobj(self.A) and not np.iscomplexobj(rhs):
            rhs = rhs.astype(complex)
        sol = self.lu.solve(rhs)
        u, lam = sol[:-1], sol[-1]
        if not np.all(np.isfinite(u)):
            raise SolverError(
                "solver produced non-finite values; condition estimate "
                f"{_condition_estimate(self.lu, self.A):.3e}")
        bnorm = np.linalg.norm(b)
        if bnorm > 0:
            res = np.linalg.norm(self.K @ u - b) / bnorm
            if res > RESIDUAL_TOL:
                raise SolverError(
                    f"relative residual {res:.3e} exceeds {RESIDUAL_TOL:g}; "
                    f"condition estimate {_condition_estimate(self.lu, self.A):.3e}")
        V = electrode_averages(mesh, u)
        return u - V.sum() / mesh.layout.n_electrodes


def assemble_and_solve(mesh: TriMesh, gamma: ConductivityField, flux) -> np.ndarray:
    """Solve div(gamma grad u) = 0 with Neumann data gamma du/dn = flux.

    ``flux`` is any callable mapping boundary angles to current density
    (GapFlux or a smooth function). The returned nodal potential is
    grounded so the electrode-averaged voltages sum to zero.
    """
    return _GroundedSolver(mesh, gamma).solve(flux)


def simulate_measurements(mesh: TriMesh, gamma: ConductivityField,
                          patterns: CurrentPatternSet,
                          layout: ElectrodeLayout | None = None) -> "MeasurementFrame":
    """Electrode voltage matrix for every current pattern (one factorization)."""
    layout = layout or mesh.layout
    if patterns.n_electrodes != layout.n_electrodes:
        raise ValueError("current patterns and layout disagree on electrode count")
    solver = _GroundedSolver(mesh, gamma)
    L = layout.n_electrodes
    V = np.zeros((L - 1, L), dtype=complex)
    for i, row in enumerate(patterns.rows):
        try:
            u = solver.solve(gap_boundary_flux(row, layout))
        except SolverError as exc:
            raise SolverError(f"pattern {i}: {exc}") from exc
        V[i] = electrode_averages(mesh, u)
    return MeasurementFrame(voltages=V, layout=layout,
                            amplitude=patterns.amplitude)


@dataclass(frozen=True)
class MeasurementFrame:
    """Electrode voltages (L-1 patterns x L electrodes), rows grounded to zero sum."""

    voltages: np.ndarray
    layout: ElectrodeLayout
    amplitude: float
    noise_level: float = 0.0
    noise_seed: int | None = None

    @property
    def n_electrodes(self) -> int:
        return self.voltages.shape[1]

    def max_row_imbalance(self) -> float:
        """Largest |row sum| relative to the row magnitude."""
        sums = np.abs(self.voltages.sum(axis=1))
        scales = np.abs(self.voltages).sum(axis=1)
        scales[scales == 0] = 1.0
        return float((sums / scales).max())


def add_noise(frame: MeasurementFrame, level: float, seed: int) -> MeasurementFrame:
    """Perturb each voltage entry by level * |entry| * xi, xi ~ N(0, 1).

    Real and imaginary parts are perturbed independently, each scaled by
    its own magnitude, so purely real frames stay real. Rows are
    re-centered to sum to zero. Deterministic given the seed.
    """
    if level < 0:
        raise ValueError("noise level must be nonnegative")
    if level == 0:
        return replace(frame, noise_level=0.0, noise_seed=int(seed))
    rng = np.random.default_rng(seed)
    v = frame.voltages
    xi_re = rng.standard_normal(v.shape)
    if np.iscomplexobj(v):
        xi_im = rng.standard_normal(v.shape)
        noisy = (v.real + level * np.abs(v.real) * xi_re
                 + 1j * (v.imag + level * np.abs(v.imag) * xi_im))
    else:
        noisy = v + level * np.abs(v) * xi_re
    noisy = noisy - noisy.mean(axis=1, keepdims=True)
    return replace(frame, voltages=noisy, noise_level=float(level),
                   noise_seed=int(seed))


FRAME_MAGIC = "dcm-frame-1"


def write_frame(frame: MeasurementFrame, path) -> None:
    """Serialize a frame: text header, then interleaved (re, im) float64 LE."""
    layout = frame.layout
    seed = "none" if frame.noise_seed is None else str(frame.noise_seed)
    header = "\n".join([
        FRAME_MAGIC,
        f"electrodes {layout.n_electrodes}",
        f"patterns {frame.voltages.shape[0]}",
        f"amplitude {frame.amplitude:.17g}",
        f"noise {frame.noise_level:.17g}",
        f"seed {seed}",
        f"width {layout.width:.17g}",
        f"depth {layout.depth:.17g}",
        f"tank_radius {layout.tank_radius:.17g}",
        "end",
    ]) + "\n"
    v = np.asarray(frame.voltages, dtype=complex)
    payload = np.empty(v.shape + (2,))
    payload[..., 0] = v.real
    payload[..., 1] = v.imag
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(payload.astype("<f8").tobytes())


def read_frame(path) -> MeasurementFrame:
    with open(path, "rb") as fh:
        blob = fh.read()
    end = blob.index(b"end\n") + 4
    lines = blob[:end].decode("ascii").splitlines()
    if lines[0] != FRAME_MAGIC:
        raise ValueError(f"not a {FRAME_MAGIC} file: {path}")
    fields = dict(line.split(None, 1) for line in lines[1:-1])
    L = int(fields["electrodes"])
    n_pat = int(fields["patterns"])
    layout = ElectrodeLayout(
        n_electrodes=L,
        width=float(fields["width"]),
        depth=float(fields["depth"]),
        tank_radius=float(fields["tank_radius"]),
    )
    raw = np.frombuffer(blob[end:], dtype="<f8")
    if raw.size != n_pat * L * 2:
        raise ValueError(f"frame payload truncated in {path}")
    raw = raw.reshape(n_pat, L, 2)
    seed = fields["seed"]
    return MeasurementFrame(
        voltages=raw[..., 0] + 1j * raw[..., 1],
        layout=layout,
        amplitude=float(fields["amplitude"]),
        noise_level=float(fields["noise"]),
        noise_seed=None if seed == "none" else int(seed),
    )
