"""Command-line entry point: synth, precompute, train, sample, traverse,
evaluate, distributions, baseline-pca, serve.

Every subcommand echoes its effective configuration into the output
directory so runs are reproducible from their artifacts alone. Progress
goes to stderr, machine-readable results to files or stdout.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .bundle import load_bundle, save_bundle
from .latent import sample_latents, traverse
from .mesh import Mesh, load_segmentation, save_segmentation, stats_from_vertices
from .meshio import load_mesh_dir, save_mesh
from .metrics import VpConfig, evaluate_model
from .pca_baseline import fit_pca_bundle, sample_pca_bundle, seam_discontinuity
from .spectral import eigenprojection_distribution, fit_spectral_basis
from .synthetic import SynthConfig, attribute_names, generate_dataset
from .training import (
    TrainConfig,
    load_trained_model,
    split_dataset,
    train,
    write_loss_curves,
)

log = logging.getLogger("eigenmesh")

ABLATIONS = {
    "no-le-encoder": {"eta1": 0.0},
    "no-le-generator": {"eta2": 0.0},
    "first-k": {"selection": "first_k"},
    "no-le-standardization": {"standardize_projections": False},
    "no-data-standardization": {"standardize_data": False},
}


def _echo_manifest(out_dir: Path, command: str, payload: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"command": command, "version": __version__, **payload}
    (out_dir / "run_manifest.json").write_text(json.dumps(manifest, indent=1))


def _load_config_file(path: Path) -> dict:
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".toml":
        try:
            import tomllib  # py311+
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(text)
    return json.loads(text)


def _load_dataset_dir(data_dir: Path):
    data_dir = Path(data_dir)
    if (data_dir / "meshes").is_dir():
        data_dir = data_dir / "meshes"
    meshes = load_mesh_dir(data_dir)
    vertices = np.stack([m.vertices for m in meshes])
    return vertices, meshes[0].topology


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        subdivisions=args.subdivisions,
        attribute_count=args.attributes,
        modes_per_attribute=args.modes,
        amplitude=args.amplitude,
        sample_count=args.samples,
        seed=args.seed,
    )
    dataset = generate_dataset(cfg)
    out = Path(args.out)
    mesh_dir = out / "meshes"
    mesh_dir.mkdir(parents=True, exist_ok=True)
    digits = len(str(cfg.sample_count - 1))
    for i, verts in enumerate(dataset.vertices):
        save_mesh(Mesh(verts, dataset.template.topology),
                  mesh_dir / f"mesh_{i:0{digits}d}.ply")
    save_mesh(dataset.template, out / "template.ply")
    save_segmentation(dataset.segmentation, out / "segmentation.txt")
    with open(out / "factors.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        m = cfg.modes_per_attribute
        writer.writerow(
            [f"{name.replace(' ', '_')}_mode{j}" for name in attribute_names(cfg)
             for j in range(m)]
        )
        writer.writerows(dataset.factors.tolist())
    _echo_manifest(out, "synth", {"config": asdict(cfg)})
    log.info("wrote %d meshes to %s", cfg.sample_count, mesh_dir)
    return 0


def cmd_precompute(args) -> int:
    data_dir = Path(args.data)
    vertices, topology = _load_dataset_dir(data_dir)
    segmentation = load_segmentation(args.seg, topology)
    train_vertices, _ = split_dataset(vertices, args.val_fraction, args.seed)
    stats = stats_from_vertices(train_vertices, topology)
    basis = fit_spectral_basis(
        train_vertices, segmentation, stats, topology,
        num_modes=args.k, kappa=args.kappa, selection=args.selection,
    )
    out = Path(args.out)
    save_bundle(basis, out)
    # self-contained bundle: keep the template so later commands can
    # rebuild the topology without the data directory
    save_mesh(Mesh(stats.mean, topology), out / "template.ply")
    _echo_manifest(out, "precompute", {
        "data": str(data_dir), "segmentation": str(args.seg),
        "k": args.k, "kappa": args.kappa, "selection": args.selection,
        "val_fraction": args.val_fraction, "seed": args.seed,
        "train_meshes": int(len(train_vertices)),
    })
    log.info("precompute bundle written to %s", out)
    return 0


def cmd_train(args) -> int:
    raw = _load_config_file(Path(args.config)) if args.config else {}
    data_path = args.data or raw.pop("data", None)
    if data_path is None:
        raise SystemExit("train: provide --data or a 'data' key in the config file")
    config = TrainConfig.from_dict(raw)
    for name in args.ablate or []:
        overrides = ABLATIONS[name]
        config = TrainConfig.from_dict({**config.to_dict(), **overrides})
    basis = load_bundle(args.bundle)
    if "selection" in {k for a in (args.ablate or []) for k in ABLATIONS[a]}:
        if basis.selection != config.selection:
            raise SystemExit(
                f"train: bundle was fitted with selection={basis.selection!r}; "
                f"re-run precompute with --selection {config.selection}"
            )
    data_dir = Path(data_path)
    vertices, topology = _load_dataset_dir(data_dir)
    train_vertices, val_vertices = split_dataset(
        vertices, config.validation_fraction, args.split_seed
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = train(config, train_vertices, basis, topology,
                   val_vertices=val_vertices, out_dir=out,
                   resume_from=args.resume)
    write_loss_curves(result.curves, out / "loss_curves.csv")
    _echo_manifest(out, "train", {
        "config": config.to_dict(), "data": str(data_dir),
        "bundle": str(args.bundle), "split_seed": args.split_seed,
        "final_checkpoint": str(result.checkpoint_path),
        "initialization_seconds": result.initialization_seconds,
        "training_seconds": result.training_seconds,
    })
    log.info("training done; final checkpoint %s", result.checkpoint_path)
    return 0


def _load_model(args):
    basis = load_bundle(args.bundle)
    first_mesh_dir = getattr(args, "data", None)
    topology = None
    if first_mesh_dir:
        _, topology = _load_dataset_dir(Path(first_mesh_dir))
    if topology is None:
        # rebuild topology from the template embedded in the bundle directory
        template_path = Path(args.bundle) / "template.ply"
        if template_path.exists():
            from .meshio import load_mesh

            topology = load_mesh(template_path).topology
        else:
            raise SystemExit(
                "cannot rebuild topology: pass --data or keep template.ply in the bundle"
            )
    return load_trained_model(args.model, basis, topology), basis, topology


def cmd_sample(args) -> int:
    model, basis, topology = _load_model(args)
    z = sample_latents(model.latent_size, args.n, args.truncation, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, latent in enumerate(z):
        save_mesh(Mesh(model.generate(latent), topology), out / f"sample_{i:03d}.ply")
    np.savetxt(out / "latents.csv", z, delimiter=",")
    _echo_manifest(out, "sample", {
        "model": str(args.model), "n": args.n,
        "truncation": args.truncation, "seed": args.seed,
    })
    return 0


def cmd_traverse(args) -> int:
    model, basis, topology = _load_model(args)
    z = np.zeros(model.latent_size)
    result = traverse(model, z, args.dim, [args.low, args.high])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_mesh(Mesh(result["shapes"][0], topology), out / f"dim{args.dim}_low.ply")
    save_mesh(Mesh(result["shapes"][-1], topology), out / f"dim{args.dim}_high.ply")
    seg = basis.segmentation
    with open(out / f"dim{args.dim}_distances.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["vertex", "attribute", "distance"])
        for v, d in enumerate(result["extreme_distances"]):
            writer.writerow([v, int(seg.labels[v]), float(d)])
    _echo_manifest(out, "traverse", {
        "model": str(args.model), "dim": args.dim,
        "low": args.low, "high": args.high,
    })
    return 0


def cmd_evaluate(args) -> int:
    model, basis, topology = _load_model(args)
    vertices, _ = _load_dataset_dir(Path(args.test))
    vp_config = None
    if args.vp_pairs > 0:
        vp_config = VpConfig(pairs=args.vp_pairs, splits=args.vp_splits,
                             classifier_epochs=args.vp_epochs,
                             classifier_lr=args.vp_lr, seed=args.seed)
    report = evaluate_model(
        model, vertices, basis.segmentation,
        n_generated=args.samples, seed=args.seed, vp_config=vp_config,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=1))
    profile = np.array(report["traversal_profile"])
    with open(out.with_suffix(".traversal.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["attribute"] + [f"dim{j}" for j in range(profile.shape[1])])
        for w, row in enumerate(profile):
            writer.writerow([w] + [float(v) for v in row])
    log.info("evaluation report written to %s", out)
    print(json.dumps({k: v for k, v in report.items()
                      if k not in ("traversal_profile",)}, indent=1))
    return 0


def cmd_distributions(args) -> int:
    basis = load_bundle(args.bundle)
    vertices, _ = _load_dataset_dir(Path(args.data))
    report = eigenprojection_distribution(vertices, basis)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(report, indent=1))
    log.info("distribution report written to %s", args.out)
    return 0


def cmd_baseline_pca(args) -> int:
    data_dir = Path(args.data)
    vertices, topology = _load_dataset_dir(data_dir)
    segmentation = load_segmentation(args.seg, topology)
    bundle = fit_pca_bundle(vertices, segmentation, args.k)
    samples = sample_pca_bundle(bundle, seed=args.seed, n=args.sample)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    template = vertices.mean(axis=0)
    seams = []
    for i, verts in enumerate(samples):
        save_mesh(Mesh(verts, topology), out / f"pca_sample_{i:03d}.ply")
        seams.append(seam_discontinuity(verts, template, segmentation, topology))
    (out / "seam_discontinuity.json").write_text(json.dumps({
        "per_sample": seams, "mean": float(np.mean(seams)),
    }, indent=1))
    _echo_manifest(out, "baseline-pca", {
        "data": str(data_dir), "k": args.k, "samples": args.sample, "seed": args.seed,
    })
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    model, basis, topology = _load_model(args)
    names = args.names.split(",") if args.names else None
    app = create_app(model, basis, attribute_names=names, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eigenmesh",
        description="Spectral-latent generative mesh models: data, training, "
                    "evaluation, and serving.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the procedural dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--subdivisions", type=int, default=3)
    p.add_argument("--attributes", type=int, default=4)
    p.add_argument("--modes", type=int, default=3)
    p.add_argument("--amplitude", type=float, default=0.08)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("precompute", help="fit the spectral basis bundle")
    p.add_argument("--data", required=True)
    p.add_argument("--seg", required=True)
    p.add_argument("--k", type=int, default=50)
    p.add_argument("--kappa", type=int, default=5)
    p.add_argument("--selection", choices=["max_variance", "first_k"],
                   default="max_variance")
    p.add_argument("--val-fraction", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_precompute)

    p = sub.add_parser("train", help="train a model against a bundle")
    p.add_argument("--config", help="JSON or TOML TrainConfig file")
    p.add_argument("--bundle", required=True)
    p.add_argument("--data", help="mesh directory (or 'data' key in config)")
    p.add_argument("--out", required=True)
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--ablate", action="append", choices=sorted(ABLATIONS))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="generate meshes from a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--data", help="mesh directory for topology")
    p.add_argument("-n", type=int, default=16)
    p.add_argument("--truncation", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("traverse", help="traverse one latent dimension")
    p.add_argument("--model", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--data", help="mesh directory for topology")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--low", type=float, default=-3.0)
    p.add_argument("--high", type=float, default=3.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_traverse)

    p = sub.add_parser("evaluate", help="compute the metrics report")
    p.add_argument("--model", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--data", help="mesh directory for topology")
    p.add_argument("--test", required=True)
    p.add_argument("--samples", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vp-pairs", type=int, default=0, help="0 disables the VP score")
    p.add_argument("--vp-splits", type=int, default=3)
    p.add_argument("--vp-epochs", type=int, default=5)
    p.add_argument("--vp-lr", type=float, default=1e-4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("distributions", help="eigenprojection distribution report")
    p.add_argument("--data", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_distributions)

    p = sub.add_parser("baseline-pca", help="per-attribute PCA bundle baseline")
    p.add_argument("--data", required=True)
    p.add_argument("--seg", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--sample", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_baseline_pca)

    p = sub.add_parser("serve", help="run the HTTP inference service")
    p.add_argument("--model", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--data", help="mesh directory for topology")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--names", help="comma-separated attribute names")
    p.add_argument("--ui", help="static frontend directory to mount at /")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except SystemExit:
        raise
    except Exception as exc:  # noqa: BLE001 - single CLI boundary
        log.error("%s", exc)
        if args.verbose:
            raise
        return 1


if __name__ == "__main__":
    sys.exit(main())
