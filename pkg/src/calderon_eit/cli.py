"""Command-line front end: simulate frames, reconstruct images, generate
datasets and evaluate predictions.

Options can come from a JSON config file (``--config``); explicit flags
override file values, which override built-in defaults. Every command
echoes its effective configuration. Exit codes: 0 success, 1 runtime
failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from calderon_eit import calderon, dataset, fem, phantoms

USAGE_ERROR = 2
RUNTIME_ERROR = 1


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    return json.loads(p.read_text())


def _effective(args: argparse.Namespace, file_cfg: dict, defaults: dict) -> dict:
    """defaults < config file < explicit flags."""
    merged = dict(defaults)
    for key, value in file_cfg.items():
        if key in merged:
            merged[key] = value
    for key in merged:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    return merged


SIMULATE_DEFAULTS = dict(noise=1e-4, L=32, mesh_edge=0.05, amplitude=0.0033,
                         width=0.0254, depth=0.01, tank_radius=0.15, kind=None)
RECON_DEFAULTS = dict(R=1.3, pixels=64, grid_points=33, background=1.0,
                      mode=None)
DATASET_DEFAULTS = dict(noise=1e-4, mesh_edge=0.05, L=32, pixels=None,
                        workers=1, R=1.3)


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _effective(args, _load_config(args.config), SIMULATE_DEFAULTS)
    case = args.case
    seed = args.seed
    kind = cfg["kind"] or {"A": "none", "B": "high", "C": "low", "D": "none"}[case]
    templates = None
    if args.templates is not None:
        if not Path(args.templates).exists():
            raise FileNotFoundError(f"template file not found: {args.templates}")
        templates = phantoms.load_organ_templates(args.templates)
    if case == "A":
        phantom = phantoms.chest_phantom_case_a(seed, templates=templates)
    elif case in ("B", "C"):
        phantom = phantoms.chest_phantom_pathology(
            seed, kind, templates=templates, tank_radius=cfg["tank_radius"])
    else:
        phantom = phantoms.cucumber_phantom(seed, tank_radius=cfg["tank_radius"])
    layout = fem.ElectrodeLayout(n_electrodes=cfg["L"], width=cfg["width"],
                                 depth=cfg["depth"],
                                 tank_radius=cfg["tank_radius"])
    mesh = fem.build_disk_mesh(cfg["mesh_edge"], layout)
    patterns = fem.trig_current_patterns(cfg["L"], cfg["amplitude"])
    frame = fem.simulate_measurements(
        mesh, phantoms.phantom_to_field(phantom, mesh), patterns)
    if cfg["noise"] > 0:
        frame = fem.add_noise(frame, cfg["noise"], seed)
    fem.write_frame(frame, args.out)
    print(json.dumps({**cfg, "command": "simulate", "case": case, "seed": seed,
                      "kind": kind, "out": str(args.out)}, sort_keys=True))
    return 0


def cmd_reconstruct(args: argparse.Namespace) -> int:
    cfg = _effective(args, _load_config(args.config), RECON_DEFAULTS)
    frame = fem.read_frame(args.frame)
    reference = fem.read_frame(args.ref) if args.ref else None
    image = calderon.reconstruct(
        frame, reference, radius=cfg["R"], grid_points=cfg["grid_points"],
        n=cfg["pixels"], background=cfg["background"], mode=cfg["mode"])
    calderon.write_image(image, args.out)
    if args.preview:
        _write_preview(image, args.preview)
    print(json.dumps({"command": "reconstruct", "frame": str(args.frame),
                      "ref": str(args.ref) if args.ref else None,
                      "mode": image.mode, "out": str(args.out), **cfg},
                     sort_keys=True))
    return 0


def _write_preview(image, path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 2, figsize=(8, 4))
    for ax, plane, label in ((axes[0], image.values.real, "real"),
                             (axes[1], image.values.imag, "imaginary")):
        im = ax.imshow(plane, extent=(-1, 1, -1, 1), cmap="viridis")
        ax.set_title(label)
        fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_gen_dataset(args: argparse.Namespace) -> int:
    cfg = _effective(args, _load_config(args.config), DATASET_DEFAULTS)
    overrides = dict(noise_level=cfg["noise"], mesh_edge=cfg["mesh_edge"],
                     n_electrodes=cfg["L"], radius=cfg["R"])
    if cfg["pixels"] is not None:
        overrides["pixels"] = cfg["pixels"]
    gen_cfg = dataset.default_config(args.case, **overrides)
    dataset.generate_dataset(args.case, args.n, args.seed, config=gen_cfg,
                             out_dir=args.out, workers=cfg["workers"])
    print(json.dumps({"command": "gen-dataset", "case": args.case, "n": args.n,
                      "seed": args.seed, "out": str(args.out), **cfg},
                     sort_keys=True))
    return 0


def _parse_probes(text: str | None) -> list[tuple[int, int]]:
    if not text:
        return []
    probes = []
    for part in text.split(";"):
        r, c = part.split(",")
        probes.append((int(r), int(c)))
    return probes


def cmd_evaluate(args: argparse.Namespace) -> int:
    pred = calderon.read_image(args.pred)
    truth = calderon.read_image(args.truth)
    if pred.values.shape != truth.values.shape:
        raise ValueError(
            f"shape mismatch: pred {pred.values.shape} vs truth {truth.values.shape}")
    probes = _parse_probes(args.probes)
    n = truth.values.shape[0]
    for r, c in probes:
        if not (0 <= r < n and 0 <= c < n):
            raise ValueError(f"probe ({r},{c}) outside a {n}x{n} image")
    report = evaluate_images(pred.values, truth.values, probes)
    if args.json:
        print(json.dumps(report, sort_keys=True))
    else:
        print(f"mse {report['mse']:.8g}")
        for region in report["regions"]:
            print(f"region truth={region['truth']:.6g} "
                  f"pred_mean={region['pred_mean']:.6g} pixels={region['pixels']}")
        for probe in report["probes"]:
            print(f"probe ({probe['row']},{probe['col']}) "
                  f"pred={probe['pred']:.6g} truth={probe['truth']:.6g}")
    return 0


def evaluate_images(pred: np.ndarray, truth: np.ndarray,
                    probes: list[tuple[int, int]]) -> dict:
    """Global MSE, per-region means over the truth's constant regions, probes."""
    mse = float(np.mean(np.abs(pred - truth) ** 2))
    regions = []
    values = np.unique(np.round(truth.real, 9))
    if len(values) <= 16:  # piecewise-constant truth; skip for continuous images
        for value in values:
            mask = np.round(truth.real, 9) == value
            regions.append({"truth": float(value),
                            "pred_mean": float(pred.real[mask].mean()),
                            "pixels": int(mask.sum())})
    probe_rows = [{"row": r, "col": c,
                   "pred": float(pred.real[r, c]),
                   "truth": float(truth.real[r, c])} for r, c in probes]
    return {"mse": mse, "regions": regions, "probes": probe_rows}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="calderon-eit",
        description="EIT forward simulation, direct reconstruction and datasets")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate a voltage frame for a phantom")
    sim.add_argument("--case", required=True, choices=dataset.CASES)
    sim.add_argument("--seed", type=int, required=True)
    sim.add_argument("--out", required=True)
    sim.add_argument("--kind", choices=("none", "high", "low"))
    sim.add_argument("--noise", type=float)
    sim.add_argument("--L", type=int)
    sim.add_argument("--mesh-edge", dest="mesh_edge", type=float)
    sim.add_argument("--amplitude", type=float)
    sim.add_argument("--templates")
    sim.add_argument("--config")
    sim.set_defaults(func=cmd_simulate)

    rec = sub.add_parser("reconstruct", help="reconstruct an image from frames")
    rec.add_argument("--frame", required=True)
    rec.add_argument("--ref")
    rec.add_argument("--mode", choices=("difference", "absolute"))
    rec.add_argument("--R", type=float)
    rec.add_argument("--pixels", type=int)
    rec.add_argument("--grid-points", dest="grid_points", type=int)
    rec.add_argument("--background", type=float)
    rec.add_argument("--out", required=True)
    rec.add_argument("--preview")
    rec.add_argument("--config")
    rec.set_defaults(func=cmd_reconstruct)

    gen = sub.add_parser("gen-dataset", help="generate a paired training dataset")
    gen.add_argument("--case", required=True, choices=dataset.CASES)
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--workers", type=int)
    gen.add_argument("--pixels", type=int)
    gen.add_argument("--noise", type=float)
    gen.add_argument("--mesh-edge", dest="mesh_edge", type=float)
    gen.add_argument("--L", type=int)
    gen.add_argument("--R", type=float)
    gen.add_argument("--config")
    gen.set_defaults(func=cmd_gen_dataset)

    ev = sub.add_parser("evaluate", help="compare a prediction against a truth image")
    ev.add_argument("--pred", required=True)
    ev.add_argument("--truth", required=True)
    ev.add_argument("--probes", help='semicolon list of "row,col" positions')
    ev.add_argument("--json", action="store_true")
    ev.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, json.JSONDecodeError, dataset.DatasetError,
            phantoms.PhantomError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except fem.SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR
    except Exception as exc:  # pragma: no cover
        print(f"unexpected error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
