"""Paired training-data pipeline: phantom -> FEM -> noise -> reconstruction.

Produces datasets of (reconstructed image, rasterized ground truth) pairs
with deterministic per-sample seeding, a random train/validation split,
unit-range normalization and a bit-exact on-disk format ("dcm-ds-1": one
text manifest plus two little-endian float32 blobs, sample-major, real
plane then imaginary plane per sample).
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import partial
from pathlib import Path

import numpy as np

from calderon_eit.calderon import reconstruct
from calderon_eit.fem import (ElectrodeLayout, add_noise, build_disk_mesh,
                              simulate_measurements, trig_current_patterns,
                              uniform_field)
from calderon_eit.phantoms import (chest_phantom_case_a,
                                   chest_phantom_pathology, cucumber_phantom,
                                   phantom_to_field, rasterize,
                                   template_checksum)

FORMAT_VERSION = "dcm-ds-1"
MANIFEST_NAME = "manifest.txt"
INPUTS_NAME = "inputs.f32"
TRUTHS_NAME = "truths.f32"

CASES = ("A", "B", "C", "D")
PATHOLOGY_SCHEDULE_PERIOD = 4


class DatasetError(ValueError):
    """Dataset generation, export or import failure."""


@dataclass(frozen=True)
class GenerationConfig:
    """Full pipeline configuration; echoed verbatim into the manifest."""

    case: str = "A"
    pixels: int = 64
    mesh_edge: float = 0.05
    n_electrodes: int = 32
    amplitude: float = 0.0033
    noise_level: float = 1e-4
    radius: float = 1.3
    grid_points: int = 33
    width: float = 0.0254
    depth: float = 0.01
    tank_radius: float = 0.15
    background: complex = 0.3
    train_fraction: float = 0.9

    def layout(self) -> ElectrodeLayout:
        return ElectrodeLayout(n_electrodes=self.n_electrodes, width=self.width,
                               depth=self.depth, tank_radius=self.tank_radius)


def default_config(case: str, **overrides) -> GenerationConfig:
    """Per-case defaults: pixel counts and reference backgrounds."""
    if case not in CASES:
        raise DatasetError(f"unknown case {case!r}, expected one of {CASES}")
    base = {
        "A": dict(pixels=64, background=0.3),
        "B": dict(pixels=128, background=0.19),
        "C": dict(pixels=128, background=0.19),
        "D": dict(pixels=64, background=0.18, depth=0.016),
    }[case]
    base.update(overrides)
    return GenerationConfig(case=case, **base)


def pathology_kind(index: int) -> str:
    """Deterministic class schedule for the mixed pathology cases.

    Even indices carry no pathology; among odd ones, index % 4 == 3 is the
    high-conductivity class and index % 4 == 1 the low-conductivity class,
    so any prefix of length N holds exactly ceil(N/2) / floor(N/4) /
    remainder samples of the three classes.
    """
    if index % 2 == 0:
        return "none"
    return "high" if index % 4 == 3 else "low"


def _noise_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


_context_cache: dict = {}


def _sample_context(config: GenerationConfig):
    ctx = _context_cache.get(config)
    if ctx is None:
        layout = config.layout()
        mesh = build_disk_mesh(config.mesh_edge, layout)
        patterns = trig_current_patterns(config.n_electrodes, config.amplitude)
        reference = simulate_measurements(
            mesh, uniform_field(mesh, config.background), patterns)
        ctx = (mesh, patterns, reference)
        _context_cache.clear()
        _context_cache[config] = ctx
    return ctx


def generate_sample(config: GenerationConfig, seed: int, index: int):
    """One (reconstruction, truth, kind) triple for sample ``index``.

    The phantom seed is seed + index; the measurement noise stream is
    derived from (seed, index) so samples are independent of worker
    scheduling.
    """
    mesh, patterns, reference = _sample_context(config)
    phantom_seed = int(seed) + int(index)
    kind = pathology_kind(index) if config.case in ("B", "C") else "none"
    if config.case == "A":
        phantom = chest_phantom_case_a(phantom_seed)
    elif config.case in ("B", "C"):
        phantom = chest_phantom_pathology(phantom_seed, kind,
                                          tank_radius=config.tank_radius)
    else:
        phantom = cucumber_phantom(phantom_seed, tank_radius=config.tank_radius)
    frame = simulate_measurements(mesh, phantom_to_field(phantom, mesh), patterns)
    if config.noise_level > 0:
        frame = add_noise(frame, config.noise_level, _noise_seed(seed, index))
    recon = reconstruct(frame, reference, radius=config.radius,
                        grid_points=config.grid_points, n=config.pixels,
                        background=config.background)
    truth = rasterize(phantom, config.pixels)
    return recon.values, truth.values, kind


def split(n_samples: int, fraction: float = 0.9,
          seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Uniform random train/validation partition, deterministic given seed."""
    if not 0.0 < fraction < 1.0:
        raise DatasetError(f"train fraction must lie in (0, 1), got {fraction}")
    perm = np.random.default_rng(seed).permutation(n_samples)
    n_train = min(max(int(round(n_samples * fraction)), 1), n_samples - 1)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def normalize_unit_range(images: np.ndarray, per_part: bool = True):
    """Affine map of a batch onto [0, 1] with the min/max recorded.

    With ``per_part`` the real and imaginary planes get independent
    records. A constant batch (max == min) is rejected.
    """
    arr = np.asarray(images)
    if arr.size == 0:
        raise DatasetError("cannot normalize an empty batch")

    def _map(plane):
        lo, hi = float(plane.min()), float(plane.max())
        if hi == lo:
            raise DatasetError("constant batch cannot be normalized to [0, 1]")
        return (plane - lo) / (hi - lo), (lo, hi)

    if per_part and np.iscomplexobj(arr):
        re, rec_re = _map(arr.real)
        im, rec_im = _map(arr.imag)
        return re + 1j * im, {"re": rec_re, "im": rec_im}
    if np.iscomplexobj(arr):
        stacked = np.concatenate([arr.real.ravel(), arr.imag.ravel()])
        lo, hi = float(stacked.min()), float(stacked.max())
        if hi == lo:
            raise DatasetError("constant batch cannot be normalized to [0, 1]")
        return (arr - (lo + 1j * lo)) / (hi - lo), {"all": (lo, hi)}
    out, rec = _map(arr)
    return out, {"re": rec}


def denormalize(images: np.ndarray, record: tuple[float, float]) -> np.ndarray:
    lo, hi = record
    return images * (hi - lo) + lo


def _plane_record(plane: np.ndarray) -> tuple[float, float]:
    # Constant planes (e.g. the zero imaginary part of a real phantom) map
    # to 0 under the degenerate record (lo, lo + 1).
    lo, hi = float(plane.min()), float(plane.max())
    if hi == lo:
        hi = lo + 1.0
    return lo, hi


@dataclass(frozen=True)
class DatasetManifest:
    """Everything needed to regenerate, verify and invert a dataset."""

    case: str
    n_samples: int
    seed: int
    config: GenerationConfig
    normalization: dict
    train_indices: tuple
    val_indices: tuple
    sample_seeds: tuple
    kinds: tuple | None
    template_sha256: str
    inputs_sha256: str
    truths_sha256: str
    version: str = FORMAT_VERSION


@dataclass(frozen=True)
class Dataset:
    """Normalized sample pairs, shape (N, 2, n, n) float32, planes re then im."""

    inputs: np.ndarray
    truths: np.ndarray
    manifest: DatasetManifest

    def denorm_input(self, index: int) -> np.ndarray:
        norm = self.manifest.normalization
        re = denormalize(self.inputs[index, 0].astype(float), norm["input_re"])
        im = denormalize(self.inputs[index, 1].astype(float), norm["input_im"])
        return re + 1j * im

    def denorm_truth(self, index: int) -> np.ndarray:
        norm = self.manifest.normalization
        re = denormalize(self.truths[index, 0].astype(float), norm["truth_re"])
        im = denormalize(self.truths[index, 1].astype(float), norm["truth_im"])
        return re + 1j * im


def _pack_planes(images: np.ndarray, records: dict, prefix: str) -> np.ndarray:
    re = (images.real - records[f"{prefix}_re"][0]) / (
        records[f"{prefix}_re"][1] - records[f"{prefix}_re"][0])
    im = (images.imag - records[f"{prefix}_im"][0]) / (
        records[f"{prefix}_im"][1] - records[f"{prefix}_im"][0])
    return np.stack([re, im], axis=1).astype("<f4")


def generate_dataset(case: str, n_samples: int, seed: int,
                     config: GenerationConfig | None = None,
                     out_dir=None, workers: int = 1) -> Dataset:
    """Generate N sample pairs and (optionally) export them to ``out_dir``."""
    if n_samples < 1:
        raise DatasetError("need at least one sample")
    config = config or default_config(case)
    if config.case != case:
        config = replace(config, case=case)
    if case not in CASES:
        raise DatasetError(f"unknown case {case!r}")

    job = partial(_generate_star, config, int(seed))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, range(n_samples), chunksize=1))
    else:
        results = [job(i) for i in range(n_samples)]

    n = config.pixels
    inputs = np.stack([r[0] for r in results]).reshape(n_samples, n, n)
    truths = np.stack([r[1] for r in results]).reshape(n_samples, n, n)
    kinds = tuple(r[2] for r in results) if case in ("B", "C") else None

    records = {
        "input_re": _plane_record(inputs.real),
        "input_im": _plane_record(inputs.imag),
        "truth_re": _plane_record(truths.real),
        "truth_im": _plane_record(truths.imag),
    }
    inputs_packed = _pack_planes(inputs, records, "input")
    truths_packed = _pack_planes(truths, records, "truth")
    train_idx, val_idx = split(n_samples, config.train_fraction, seed)

    manifest = DatasetManifest(
        case=case,
        n_samples=n_samples,
        seed=int(seed),
        config=config,
        normalization=records,
        train_indices=tuple(int(i) for i in train_idx),
        val_indices=tuple(int(i) for i in val_idx),
        sample_seeds=tuple(int(seed) + i for i in range(n_samples)),
        kinds=kinds,
        template_sha256=template_checksum(),
        inputs_sha256=hashlib.sha256(inputs_packed.tobytes()).hexdigest(),
        truths_sha256=hashlib.sha256(truths_packed.tobytes()).hexdigest(),
    )
    ds = Dataset(inputs=inputs_packed, truths=truths_packed, manifest=manifest)
    if out_dir is not None:
        save_dataset(ds, out_dir)
    return ds


def _generate_star(config: GenerationConfig, seed: int, index: int):
    return generate_sample(config, seed, index)


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def manifest_text(manifest: DatasetManifest) -> str:
    cfg = manifest.config
    bg = complex(cfg.background)
    lines = [
        manifest.version,
        f"case {manifest.case}",
        f"samples {manifest.n_samples}",
        f"seed {manifest.seed}",
        f"pixels {cfg.pixels}",
        f"mesh_edge {_fmt(cfg.mesh_edge)}",
        f"electrodes {cfg.n_electrodes}",
        f"amplitude {_fmt(cfg.amplitude)}",
        f"noise {_fmt(cfg.noise_level)}",
        f"radius {_fmt(cfg.radius)}",
        f"grid_points {cfg.grid_points}",
        f"width {_fmt(cfg.width)}",
        f"depth {_fmt(cfg.depth)}",
        f"tank_radius {_fmt(cfg.tank_radius)}",
        f"background {_fmt(bg.real)} {_fmt(bg.imag)}",
        f"train_fraction {_fmt(cfg.train_fraction)}",
        f"template_sha256 {manifest.template_sha256}",
    ]
    for key in ("input_re", "input_im", "truth_re", "truth_im"):
        lo, hi = manifest.normalization[key]
        lines.append(f"norm_{key} {_fmt(lo)} {_fmt(hi)}")
    lines.append("sample_seeds " + ",".join(str(s) for s in manifest.sample_seeds))
    if manifest.kinds is not None:
        lines.append("kinds " + ",".join(manifest.kinds))
    lines.append("train " + ",".join(str(i) for i in manifest.train_indices))
    lines.append("val " + ",".join(str(i) for i in manifest.val_indices))
    lines.append(f"inputs_sha256 {manifest.inputs_sha256}")
    lines.append(f"truths_sha256 {manifest.truths_sha256}")
    lines.append("end")
    return "\n".join(lines) + "\n"


def save_dataset(dataset: Dataset, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / MANIFEST_NAME).write_text(manifest_text(dataset.manifest),
                                     encoding="ascii")
    (out / INPUTS_NAME).write_bytes(dataset.inputs.astype("<f4").tobytes())
    (out / TRUTHS_NAME).write_bytes(dataset.truths.astype("<f4").tobytes())


def load_dataset(path) -> Dataset:
    """Import a dataset, verifying version and blob checksums."""
    root = Path(path)
    text = (root / MANIFEST_NAME).read_text(encoding="ascii")
    lines = text.splitlines()
    if lines[0] != FORMAT_VERSION:
        raise DatasetError(
            f"format version mismatch: got {lines[0]!r}, expected {FORMAT_VERSION!r}")
    if lines[-1] != "end":
        raise DatasetError("manifest truncated (missing end marker)")
    fields = dict(line.split(None, 1) for line in lines[1:-1])

    config = GenerationConfig(
        case=fields["case"],
        pixels=int(fields["pixels"]),
        mesh_edge=float(fields["mesh_edge"]),
        n_electrodes=int(fields["electrodes"]),
        amplitude=float(fields["amplitude"]),
        noise_level=float(fields["noise"]),
        radius=float(fields["radius"]),
        grid_points=int(fields["grid_points"]),
        width=float(fields["width"]),
        depth=float(fields["depth"]),
        tank_radius=float(fields["tank_radius"]),
        background=_parse_complex(fields["background"]),
        train_fraction=float(fields["train_fraction"]),
    )
    norm = {}
    for key in ("input_re", "input_im", "truth_re", "truth_im"):
        lo, hi = fields[f"norm_{key}"].split()
        norm[key] = (float(lo), float(hi))
    n_samples = int(fields["samples"])
    n = config.pixels

    blobs = {}
    for name, sha_key in ((INPUTS_NAME, "inputs_sha256"),
                          (TRUTHS_NAME, "truths_sha256")):
        raw = (root / name).read_bytes()
        digest = hashlib.sha256(raw).hexdigest()
        if digest != fields[sha_key]:
            raise DatasetError(f"checksum mismatch for {name}")
        arr = np.frombuffer(raw, dtype="<f4")
        if arr.size != n_samples * 2 * n * n:
            raise DatasetError(f"blob {name} has wrong size")
        blobs[name] = arr.reshape(n_samples, 2, n, n)

    manifest = DatasetManifest(
        case=fields["case"],
        n_samples=n_samples,
        seed=int(fields["seed"]),
        config=config,
        normalization=norm,
        train_indices=tuple(int(i) for i in fields["train"].split(",")),
        val_indices=tuple(int(i) for i in fields["val"].split(",")),
        sample_seeds=tuple(int(s) for s in fields["sample_seeds"].split(",")),
        kinds=tuple(fields["kinds"].split(",")) if "kinds" in fields else None,
        template_sha256=fields["template_sha256"],
        inputs_sha256=fields["inputs_sha256"],
        truths_sha256=fields["truths_sha256"],
    )
    return Dataset(inputs=blobs[INPUTS_NAME], truths=blobs[TRUTHS_NAME],
                   manifest=manifest)


def _parse_complex(text: str) -> complex:
    re_s, im_s = text.split()
    value = float(re_s) + 1j * float(im_s)
    return value.real if value.imag == 0 else value
