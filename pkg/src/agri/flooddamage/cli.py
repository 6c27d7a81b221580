"""
Command-line interface: ``flood-damage <command> ...``.

Every command validates its inputs before computing, writes its artifacts
atomically and returns the exit code of the error class it failed with
(see errors.py), 0 on success.
"""

import argparse
import logging
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from rxn.utilities.logging import setup_console_logger

from .change_detection import delta_ndvi
from .checkpoint import load_into, write_checkpoint
from .config import PipelineConfig, get_settings, load_pipeline_config
from .edsr import Edsr, build_edsr, infer_sr, prepare_lr_grid
from .errors import FloodDamageError, InputFileError
from .metrics import SsimMode
from .nn import StateDict
from .pipeline import (
    compare_input_modalities,
    evaluate_sr_on_scenes,
    label_pair,
    preprocess_pair,
    train_seg_on_scenes,
    train_sr_on_scenes,
)
from .raster import QualityMask, Raster
from .raster_io import read_raster, write_raster
from .render import RenderStyle, render_map
from .report import EvaluationReport, MetricRow, segmentation_rows, sr_quality_rows
from .resampling import ResamplingMethod, upsample
from .synthdata import (
    MANIFEST_NAME,
    SceneBundle,
    SceneSpec,
    generate_scene,
    load_bundle,
    save_bundle,
)
from .training import TrainingResult, write_history_csv
from .unet import Unet, build_unet, predict_damage
from .utils import (
    atomic_directory,
    atomic_write_bytes,
    atomic_write_text,
    with_suffix_added,
)

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

Command = Callable[[argparse.Namespace, PipelineConfig], None]


def _scene_dir(out: Path, seed: int) -> Path:
    return out / f"scene-{seed:04d}"


def _find_scenes(paths: Sequence[Path]) -> List[SceneBundle]:
    """Scene directories given directly or as the subdirectories of a parent."""
    directories: List[Path] = []
    for path in paths:
        if not path.is_dir():
            raise InputFileError(f'Scene directory "{path}" does not exist.')
        if (path / MANIFEST_NAME).is_file():
            directories.append(path)
        else:
            directories.extend(
                sorted(p for p in path.iterdir() if (p / MANIFEST_NAME).is_file())
            )
    if not directories:
        raise InputFileError(f"No scene found in {[str(p) for p in paths]}.")
    scenes = [load_bundle(d) for d in directories]
    return sorted(scenes, key=lambda s: s.spec.seed)


def _load_edsr(path: Path, config: PipelineConfig) -> Edsr:
    model = build_edsr(config.edsr, seed=config.seed)
    load_into(model, path)
    return model


def _load_unet(path: Path, config: PipelineConfig) -> Unet:
    model = build_unet(config.unet, seed=config.seed)
    load_into(model, path)
    return model


def _save_training(
    state: StateDict, result: TrainingResult, path: Path, config: PipelineConfig
) -> None:
    write_checkpoint(state, path)
    write_history_csv(result.history, with_suffix_added(path, ".history.csv"))
    atomic_write_text(with_suffix_added(path, ".cfg"), config.render())


def cmd_synth(args: argparse.Namespace, config: PipelineConfig) -> None:
    out = args.out or get_settings().work_dir / "scenes"
    for seed in range(args.seed, args.seed + args.count):
        spec = SceneSpec(
            seed=seed,
            hr_size=args.hr_size,
            scale=config.scale,
            parcel_count=args.parcel_count,
            damage_fraction=args.damage_fraction,
            narrow_feature_count=args.narrow_features,
            cloud_fraction=args.cloud_fraction,
            water_glare_fraction=args.water_glare_fraction,
            noise_sigma=args.noise_sigma,
            blur_sigma=args.blur_sigma,
            misregistration_dx=args.misregistration[0],
            misregistration_dy=args.misregistration[1],
        )
        save_bundle(generate_scene(spec), _scene_dir(out, seed))


def cmd_preprocess(args: argparse.Namespace, config: PipelineConfig) -> None:
    if args.scene is not None:
        scene = load_bundle(args.scene)
        bands = (scene.pre_bands, scene.post_bands)
        qualities = (scene.pre_quality, scene.post_quality)
        cropland = scene.cropland
        hr_like: Optional[Raster] = scene.pre_hr
    else:
        missing = [
            name
            for name in ("pre", "post", "pre_quality", "post_quality", "cropland")
            if getattr(args, name) is None
        ]
        if missing:
            raise InputFileError(f"Missing inputs: {', '.join(missing)} (or --scene).")
        bands = (read_raster(args.pre), read_raster(args.post))
        qualities = (
            QualityMask.from_raster(read_raster(args.pre_quality)),
            QualityMask.from_raster(read_raster(args.post_quality)),
        )
        cropland = read_raster(args.cropland)
        hr_like = None
    if args.hr_like is not None:
        hr_like = read_raster(args.hr_like)

    result = preprocess_pair(
        *bands,
        *qualities,
        cropland,
        max_shift=config.max_shift,
        red_band=args.red_band,
        nir_band=args.nir_band,
    )
    pre, post = result.pre, result.post
    if hr_like is not None:
        pre, post = (
            prepare_lr_grid(r, hr_like.geo, hr_like.width, hr_like.height, config.scale)
            for r in (pre, post)
        )
    registration = result.registration
    with atomic_directory(args.out) as tmp_dir:
        write_raster(pre, tmp_dir / "pre_ndvi.fr1")
        write_raster(post, tmp_dir / "post_ndvi.fr1")
        (tmp_dir / "registration.txt").write_text(
            f"dx={registration.dx!r}\n"
            f"dy={registration.dy!r}\n"
            f"score={registration.score!r}\n"
        )


def cmd_train_sr(args: argparse.Namespace, config: PipelineConfig) -> None:
    scenes = _find_scenes(args.scenes)
    model, result = train_sr_on_scenes(scenes, config)
    _save_training(model.state_dict(), result, args.out, config)


def cmd_infer_sr(args: argparse.Namespace, config: PipelineConfig) -> None:
    lr = read_raster(args.input)
    model = _load_edsr(args.checkpoint, config)
    write_raster(infer_sr(model, lr, config.sr_tile, config.sr_overlap), args.out)


def cmd_label(args: argparse.Namespace, config: PipelineConfig) -> None:
    labels = label_pair(read_raster(args.pre), read_raster(args.post), config)
    write_raster(labels, args.out)


def cmd_train_seg(args: argparse.Namespace, config: PipelineConfig) -> None:
    scenes = _find_scenes(args.scenes)
    model, result = train_seg_on_scenes(scenes, config)
    _save_training(model.state_dict(), result, args.out, config)


def cmd_infer(args: argparse.Namespace, config: PipelineConfig) -> None:
    pre, post = read_raster(args.pre), read_raster(args.post)
    model = _load_unet(args.checkpoint, config)
    if args.sr_checkpoint is not None:
        sr_model = _load_edsr(args.sr_checkpoint, config)
        pre, post = (
            infer_sr(sr_model, r, config.sr_tile, config.sr_overlap)
            for r in (pre, post)
        )
    damage = predict_damage(
        model,
        delta_ndvi(pre, post),
        config.seg_tile,
        config.seg_overlap,
        config.min_size,
    )
    write_raster(damage, args.out)


def _sr_rows(args: argparse.Namespace, config: PipelineConfig) -> List[MetricRow]:
    rows: List[MetricRow] = []
    for event in ("pre", "post"):
        sr_path = getattr(args, f"sr_{event}")
        hr_path = getattr(args, f"hr_{event}")
        if sr_path is None and hr_path is None:
            continue
        if sr_path is None or hr_path is None:
            raise InputFileError(f"--sr-{event} and --hr-{event} go together.")
        lr_path = getattr(args, f"lr_{event}")
        baseline = None
        if lr_path is not None:
            baseline = upsample(
                read_raster(lr_path), config.scale, ResamplingMethod.BICUBIC
            )
        rows.extend(
            sr_quality_rows(
                f"sr/{event}",
                read_raster(sr_path),
                read_raster(hr_path),
                config.ssim,
                baseline,
            )
        )
    return rows


def cmd_evaluate(args: argparse.Namespace, config: PipelineConfig) -> None:
    if args.ssim_global:
        config = config.model_copy(
            update={"ssim": config.ssim.model_copy(update={"mode": SsimMode.GLOBAL})}
        )
    renders: Dict[str, bytes] = {}
    rows: List[MetricRow] = []
    if args.truth is not None or args.pred is not None:
        if args.truth is None or args.pred is None:
            raise InputFileError("--truth and --pred go together.")
        truth, pred = read_raster(args.truth), read_raster(args.pred)
        region = read_raster(args.region) if args.region is not None else None
        rows.extend(segmentation_rows("seg", truth, pred, region))
        renders["truth.ppm"] = render_map(truth, RenderStyle.DAMAGE_CLASSES)
        renders["pred.ppm"] = render_map(pred, RenderStyle.DAMAGE_CLASSES)
    rows.extend(_sr_rows(args, config))
    for event in ("pre", "post"):
        sr_path = getattr(args, f"sr_{event}")
        if sr_path is not None:
            renders[f"sr_{event}.ppm"] = render_map(
                read_raster(sr_path), RenderStyle.NDVI_DIVERGING
            )
    if not rows:
        raise InputFileError(
            "Nothing to evaluate: give --truth/--pred or --sr-*/--hr-*."
        )

    report = EvaluationReport(config_hash=config.config_hash(), rows=rows)
    with atomic_directory(args.out) as tmp_dir:
        report.write(tmp_dir / "report.csv", tmp_dir / "report.txt")
        for name, payload in renders.items():
            atomic_write_bytes(tmp_dir / name, payload)
    print(report.to_table())


def cmd_compare(args: argparse.Namespace, config: PipelineConfig) -> None:
    scenes = _find_scenes(args.scenes)
    seg_model = _load_unet(args.seg_checkpoint, config)
    sr_model = None
    if args.sr_checkpoint is not None:
        sr_model = _load_edsr(args.sr_checkpoint, config)
    rows = compare_input_modalities(scenes, seg_model, sr_model, config)
    if sr_model is not None:
        rows.extend(evaluate_sr_on_scenes(scenes, sr_model, config))
    report = EvaluationReport(config_hash=config.config_hash(), rows=rows)
    with atomic_directory(args.out) as tmp_dir:
        report.write(tmp_dir / "report.csv", tmp_dir / "report.txt")
    print(report.to_table())


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="Pipeline configuration file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Configuration override (repeatable), e.g. edsr.n_resblocks=4",
    )
    parser.add_argument("--log-level", help="Logging level (default from settings)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flood-damage",
        description="Flood crop-damage mapping with NDVI super-resolution",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    def add(name: str, func: Command, help_text: str) -> argparse.ArgumentParser:
        sub = commands.add_parser(name, help=help_text, description=help_text)
        _add_common(sub)
        sub.set_defaults(func=func)
        return sub

    synth = add("synth", cmd_synth, "Generate synthetic scene bundles")
    synth.add_argument("--seed", type=int, default=0, help="Seed of the first scene")
    synth.add_argument("--count", type=int, default=1, help="Number of scenes")
    synth.add_argument(
        "--out", type=Path, help="Output directory (scene-<seed> inside)"
    )
    synth.add_argument("--hr-size", type=int, default=768)
    synth.add_argument("--parcel-count", type=int, default=120)
    synth.add_argument("--damage-fraction", type=float, default=0.3)
    synth.add_argument("--narrow-features", type=int, default=6)
    synth.add_argument("--cloud-fraction", type=float, default=0.0)
    synth.add_argument("--water-glare-fraction", type=float, default=0.0)
    synth.add_argument("--noise-sigma", type=float, default=0.01)
    synth.add_argument("--blur-sigma", type=float, default=0.5)
    synth.add_argument(
        "--misregistration",
        type=float,
        nargs=2,
        default=(0.0, 0.0),
        metavar=("DX", "DY"),
        help="Displacement of the post-flood band product (LR pixels)",
    )

    pre = add("preprocess", cmd_preprocess, "NDVI, masking and co-registration")
    pre.add_argument("--scene", type=Path, help="Take all inputs from a scene bundle")
    pre.add_argument("--pre", type=Path, help="Pre-flood band product (FR1)")
    pre.add_argument("--post", type=Path, help="Post-flood band product (FR1)")
    pre.add_argument("--pre-quality", type=Path)
    pre.add_argument("--post-quality", type=Path)
    pre.add_argument("--cropland", type=Path)
    pre.add_argument("--red-band", type=int, default=0)
    pre.add_argument("--nir-band", type=int, default=1)
    pre.add_argument(
        "--hr-like",
        type=Path,
        help="HR raster whose grid, coarsened by the SR scale, is the output grid",
    )
    pre.add_argument("--out", type=Path, required=True, help="Output directory")

    train_sr = add("train-sr", cmd_train_sr, "Train the super-resolution network")
    train_sr.add_argument("--scenes", type=Path, nargs="+", required=True)
    train_sr.add_argument("--out", type=Path, required=True, help="Checkpoint path")

    infer_sr_cmd = add("infer-sr", cmd_infer_sr, "Super-resolve an NDVI raster")
    infer_sr_cmd.add_argument("--checkpoint", type=Path, required=True)
    infer_sr_cmd.add_argument("--input", type=Path, required=True)
    infer_sr_cmd.add_argument("--out", type=Path, required=True)

    label = add("label", cmd_label, "Rule-based damage labels from an NDVI pair")
    label.add_argument("--pre", type=Path, required=True)
    label.add_argument("--post", type=Path, required=True)
    label.add_argument("--out", type=Path, required=True)

    train_seg = add("train-seg", cmd_train_seg, "Train the segmentation network")
    train_seg.add_argument("--scenes", type=Path, nargs="+", required=True)
    train_seg.add_argument("--out", type=Path, required=True, help="Checkpoint path")

    infer = add("infer", cmd_infer, "Predict a damage map from an NDVI pair")
    infer.add_argument("--checkpoint", type=Path, required=True)
    infer.add_argument("--pre", type=Path, required=True)
    infer.add_argument("--post", type=Path, required=True)
    infer.add_argument(
        "--sr-checkpoint", type=Path, help="Super-resolve the (LR) inputs first"
    )
    infer.add_argument("--out", type=Path, required=True)

    evaluate = add("evaluate", cmd_evaluate, "Metrics report and rendered maps")
    evaluate.add_argument("--truth", type=Path, help="Reference damage labels")
    evaluate.add_argument("--pred", type=Path, help="Predicted damage labels")
    evaluate.add_argument("--region", type=Path, help="Boolean evaluation mask")
    for event in ("pre", "post"):
        evaluate.add_argument(f"--sr-{event}", type=Path)
        evaluate.add_argument(f"--hr-{event}", type=Path)
        evaluate.add_argument(
            f"--lr-{event}", type=Path, help="For the bicubic baseline"
        )
    evaluate.add_argument(
        "--ssim-global",
        action="store_true",
        help="Single-window SSIM instead of windowed",
    )
    evaluate.add_argument("--out", type=Path, required=True, help="Report directory")

    compare = add("compare", cmd_compare, "Damage-map F1 per input modality")
    compare.add_argument("--scenes", type=Path, nargs="+", required=True)
    compare.add_argument("--seg-checkpoint", type=Path, required=True)
    compare.add_argument("--sr-checkpoint", type=Path)
    compare.add_argument("--out", type=Path, required=True, help="Report directory")

    return parser


def _check_inputs(args: argparse.Namespace) -> None:
    for name in (
        "input",
        "checkpoint",
        "seg_checkpoint",
        "sr_checkpoint",
        "pre",
        "post",
        "pre_quality",
        "post_quality",
        "cropland",
        "hr_like",
        "truth",
        "pred",
        "region",
        "sr_pre",
        "hr_pre",
        "lr_pre",
        "sr_post",
        "hr_post",
        "lr_post",
    ):
        path = getattr(args, name, None)
        if path is not None and not Path(path).is_file():
            raise InputFileError(f'Input file "{path}" does not exist.')


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_console_logger(args.log_level or get_settings().log_level)
    try:
        _check_inputs(args)
        config = load_pipeline_config(args.config, args.overrides)
        args.func(args, config)
    except FloodDamageError as e:
        logger.error(f"{args.command} failed ({type(e).__name__}): {e}")
        return e.exit_code
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
