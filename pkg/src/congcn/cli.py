"""Operator commands: segment, train, eval.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
CONGCN_THREADS caps the BLAS thread pools of the pure numeric stages; it
must be applied before numpy loads, so the heavy imports happen inside
the command handlers.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path


def _apply_thread_cap() -> None:
    cap = os.environ.get("CONGCN_THREADS")
    if not cap:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(var, cap)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="congcn",
                                     description="Superpixel-graph contrastive GCN "
                                                 "for hyperspectral classification")
    sub = parser.add_subparsers(dest="command", required=True)

    seg = sub.add_parser("segment", help="run SLIC and write the assignment map")
    seg.add_argument("--cube", required=True)
    seg.add_argument("--out", required=True)
    seg.add_argument("--n-segments", type=int, default=None)
    seg.add_argument("--compactness", type=float, default=0.1)
    seg.add_argument("--slic-iters", type=int, default=10)
    seg.add_argument("--seed", type=int, default=0)

    tr = sub.add_parser("train", help="train on a cube/labels/manifest triple")
    tr.add_argument("--cube", required=True)
    tr.add_argument("--labels", required=True)
    tr.add_argument("--manifest", required=True)
    tr.add_argument("--out", required=True)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--iters", type=int, default=4000)
    tr.add_argument("--lr", type=float, default=0.01)
    tr.add_argument("--lambda-ssc", type=float, default=0.1)
    tr.add_argument("--lambda-g2", type=float, default=0.01)
    tr.add_argument("--lambda-local", type=float, default=0.5)
    tr.add_argument("--p-sample", type=float, default=0.3)
    tr.add_argument("--mi-bins", type=int, default=16)
    tr.add_argument("--levels", type=int, default=2)
    tr.add_argument("--hidden", type=int, default=128)
    tr.add_argument("--neg-ratio", type=int, default=1)
    tr.add_argument("--gamma", type=float, default=0.2)
    tr.add_argument("--n-segments", type=int, default=None)
    tr.add_argument("--compactness", type=float, default=0.1)
    tr.add_argument("--slic-iters", type=int, default=10)
    tr.add_argument("--no-closs", action="store_true",
                    help="drop the contrastive term")
    tr.add_argument("--no-gloss", action="store_true",
                    help="drop the graph generative term")
    tr.add_argument("--no-spa-aug", action="store_true",
                    help="disable spatial-level augmentation")
    tr.add_argument("--no-spe-aug", action="store_true",
                    help="disable spectral-level augmentation")

    ev = sub.add_parser("eval", help="evaluate a finished training run")
    ev.add_argument("--run", required=True, help="output directory of a train run")
    ev.add_argument("--out", default=None, help="where to write the report "
                                                "(defaults to the run directory)")
    ev.add_argument("--cube", default=None)
    ev.add_argument("--labels", default=None)
    ev.add_argument("--manifest", default=None)
    return parser


def _require_files(*paths) -> None:
    from .errors import ConfigError
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise ConfigError(f"input file not found: {p}")


def _build_dataset(cube_path, labels_path, manifest_path, seed, n_segments,
                   compactness, slic_iters, gamma):
    """Shared pipeline: load, normalize, segment, split, graph."""
    from . import data, graph as graph_mod, slic
    from .errors import ConfigError

    cube = data.load_cube(cube_path)
    labels = data.load_labels(labels_path)
    manifest = data.load_manifest(manifest_path)
    if (labels.height, labels.width) != (cube.height, cube.width):
        raise ConfigError("cube and label map dimensions differ")
    if manifest.bands != cube.bands:
        raise ConfigError(f"manifest declares {manifest.bands} bands, "
                          f"cube has {cube.bands}")
    normalized = slic.normalize_bands(cube)
    if n_segments is None:
        n_segments = slic.default_segment_count(cube.height, cube.width,
                                                labels.n_classes)
    seg = slic.slic_segment(normalized, n_segments, compactness, slic_iters, seed)
    split = data.sample_split(labels, manifest, seed)
    sg = graph_mod.build_graph(normalized, seg, labels, split, gamma)
    # Every sampled class must survive the pixel->superpixel majority vote.
    for k in sorted(split.train_by_class):
        if not (sg.train_label == k).any():
            raise ConfigError(
                f"class {k} ({manifest.class_names[k - 1]}) has no labeled "
                f"superpixel; increase --n-segments or the class quota")
    return cube, labels, manifest, seg, split, sg


def cmd_segment(args) -> int:
    from . import data, slic
    _require_files(args.cube)
    cube = data.load_cube(args.cube)
    n_segments = args.n_segments or slic.default_segment_count(cube.height, cube.width)
    seg = slic.slic_segment(slic.normalize_bands(cube), n_segments,
                            args.compactness, args.slic_iters, args.seed)
    out = data.LabelMap(seg.height, seg.width, seg.n,
                        seg.assignment.astype("int32"))
    data.save_labels(out, args.out)
    print(f"wrote {args.out}: {seg.n} superpixels over "
          f"{seg.height}x{seg.width} pixels")
    return 0


def _resolved_config(args) -> dict:
    return {
        "cube": args.cube, "labels": args.labels, "manifest": args.manifest,
        "seed": args.seed, "iters": args.iters, "lr": args.lr,
        "lambda_ssc": args.lambda_ssc, "lambda_g2": args.lambda_g2,
        "lambda_local": args.lambda_local, "p_sample": args.p_sample,
        "mi_bins": args.mi_bins, "levels": args.levels, "hidden": args.hidden,
        "neg_ratio": args.neg_ratio, "gamma": args.gamma,
        "n_segments": args.n_segments, "compactness": args.compactness,
        "slic_iters": args.slic_iters,
        "use_contrastive": not args.no_closs,
        "use_generative": not args.no_gloss,
        "use_spatial_aug": not args.no_spa_aug,
        "use_spectral_aug": not args.no_spe_aug,
    }


def _dataset_from_config(cfg: dict):
    return _build_dataset(cfg["cube"], cfg["labels"], cfg["manifest"], cfg["seed"],
                          cfg["n_segments"], cfg["compactness"], cfg["slic_iters"],
                          cfg["gamma"])


def _train_config(cfg: dict):
    from .train import TrainConfig
    return TrainConfig(lr=cfg["lr"], iters=cfg["iters"],
                       lambda_local=cfg["lambda_local"],
                       lambda_ssc=cfg["lambda_ssc"], lambda_g2=cfg["lambda_g2"],
                       p_sample=cfg["p_sample"], mi_bins=cfg["mi_bins"],
                       levels=cfg["levels"], hidden=cfg["hidden"],
                       neg_ratio=cfg["neg_ratio"], seed=cfg["seed"],
                       use_contrastive=cfg["use_contrastive"],
                       use_generative=cfg["use_generative"],
                       use_spatial_aug=cfg["use_spatial_aug"],
                       use_spectral_aug=cfg["use_spectral_aug"])


def cmd_train(args) -> int:
    from .train import train
    _require_files(args.cube, args.labels, args.manifest)
    cfg = _resolved_config(args)
    tc = _train_config(cfg)
    tc.validate()
    cube, labels, manifest, seg, split, sg = _dataset_from_config(cfg)

    val_px = split.val_pixels
    val_nodes = (seg.assignment.ravel()[val_px],
                 labels.labels.ravel()[val_px]) if val_px.size else None
    result = train(sg, tc, val_nodes=val_nodes)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "run.json").write_text(json.dumps(cfg, indent=2) + "\n", encoding="utf-8")
    result.params.save(out / "checkpoint.cgcn")
    with open(out / "train_log.jsonl", "w", encoding="utf-8") as fh:
        for record in result.log:
            fh.write(json.dumps(record) + "\n")
    last = result.log[-1]
    print(f"finished {cfg['iters']} iterations; final loss {last['total']:.6f}")
    print(f"wrote {out / 'checkpoint.cgcn'} and {out / 'train_log.jsonl'}")
    return 0


def _palette(n_classes: int):
    import colorsys

    import numpy as np
    colors = np.zeros((n_classes + 1, 3), dtype=np.uint8)
    for k in range(1, n_classes + 1):
        hue = ((k - 1) * 0.6180339887498949) % 1.0
        r, g, b = colorsys.hsv_to_rgb(hue, 0.65, 0.95)
        colors[k] = (round(r * 255), round(g * 255), round(b * 255))
    return colors


def write_ppm(path, class_map, truth, palette) -> None:
    """P6 map of predicted classes; pixels without ground truth stay black."""
    import numpy as np

    shown = class_map.copy()
    shown[truth == 0] = 0
    rgb = palette[shown]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{class_map.shape[1]} {class_map.shape[0]}\n255\n".encode())
        fh.write(rgb.astype(np.uint8).tobytes())


def cmd_eval(args) -> int:
    from . import metrics
    from .errors import ConfigError
    from .model import ParamStore
    from .train import predict

    run_dir = Path(args.run)
    run_file = run_dir / "run.json"
    ckpt_file = run_dir / "checkpoint.cgcn"
    if not run_file.is_file() or not ckpt_file.is_file():
        raise ConfigError(f"{run_dir} does not contain run.json and checkpoint.cgcn")
    cfg = json.loads(run_file.read_text(encoding="utf-8"))
    for key in ("cube", "labels", "manifest"):
        override = getattr(args, key)
        if override:
            cfg[key] = override
    _require_files(cfg["cube"], cfg["labels"], cfg["manifest"])

    cube, labels, manifest, seg, split, sg = _dataset_from_config(cfg)
    params = ParamStore.load(ckpt_file)
    if params.config.n_features != sg.features.shape[1]:
        raise ConfigError("checkpoint feature width does not match the dataset")
    node_classes, pixel_map = predict(sg, params, seg)

    test_px = split.test_pixels(labels)
    m = metrics.confusion(pixel_map, labels.labels, test_px, labels.n_classes)
    rep = metrics.report(m)

    out = Path(args.out) if args.out else run_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(rep.to_json() + "\n", encoding="utf-8")
    write_ppm(out / "classmap.ppm", pixel_map, labels.labels,
              _palette(labels.n_classes))
    print(f"OA={rep.oa:.4f} AA={rep.aa:.4f} kappa={rep.kappa:.4f} "
          f"n_test={rep.n_test}")
    print(f"wrote {out / 'metrics.json'} and {out / 'classmap.ppm'}")
    return 0


def main(argv=None) -> int:
    _apply_thread_cap()
    parser = build_parser()
    args = parser.parse_args(argv)
    from .errors import CongcnError, ConfigError, ContractError

    handlers = {"segment": cmd_segment, "train": cmd_train, "eval": cmd_eval}
    try:
        return handlers[args.command](args)
    except (ConfigError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CongcnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
