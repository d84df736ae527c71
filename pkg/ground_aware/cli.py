"""Command-line interface for ground-aware lidar preprocessing."""

import json
import logging
from collections.abc import Callable, Iterator
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Optional

import numpy as np
import typer
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.table import Table
from rich.traceback import install

from ground_aware.bench import (
    accuracy_report,
    bench_ground,
    bench_scaling,
    classification_report,
    environment_report,
)
from ground_aware.config import RoiConfig, Settings, load_settings
from ground_aware.core import (
    AlgorithmError,
    GridSpec,
    GroundSurface,
    InputValidationError,
    PointCloud,
)
from ground_aware.operations import (
    AnchorEngine,
    AnchorSet,
    FeatureExtractor,
    GroundEstimator,
    PlaneBaseline,
    Scene,
    SceneAugmenter,
    build_count_grid,
    build_height_map,
    crop_roi,
    extract_donors,
    integral,
    roi_mask,
)
from ground_aware.synth import TerrainSpec, generate_scene, scatter_objects
from ground_aware.utils.formats import (
    atomic_write,
    read_ground_labels,
    read_kitti_bin,
    read_labels_json,
    write_boxes_jsonl,
    write_channels,
    write_grid,
    write_ground_labels,
    write_kitti_bin,
    write_labels_json,
    write_pgm,
)

# Install rich traceback handler
install(show_locals=True)

app = typer.Typer(
    help="🛰️ Ground-aware lidar preprocessing: local ground surfaces, anchors, "
    + "BEV features and augmentation",
    add_completion=False,
)
console = Console()
settings = Settings()

EXIT_INPUT = 2
EXIT_ALGORITHM = 3

# Global options
CONFIG_OPTION = typer.Option(
    None, "--config", help="TOML file overriding default settings"
)
VERBOSE_OPTION = typer.Option(False, "--verbose", "-v", help="Log debug details")

# Common frame options
IN_OPTION = typer.Option(..., "--in", help="KITTI .bin frame, or a directory of frames")
OUT_OPTION = typer.Option(
    ..., "--out", help="Output file (a directory for directory input)"
)
CELL_OPTION = typer.Option(None, "--cell", help="BEV cell size in meters")
WINDOW_OPTION = typer.Option(None, "--window", help="Min-filter half-window in meters")
TAU_G_OPTION = typer.Option(
    None, "--tau-g", help="Height above ground still labeled ground"
)
JOBS_OPTION = typer.Option(1, "--jobs", min=1, help="Frames processed in parallel")
PGM_OPTION = typer.Option(None, "--pgm", help="Also render an 8-bit PGM image here")
SEED_OPTION = typer.Option(None, "--seed", help="Random seed (overrides GAL_SEED)")

# Segment options
BASELINE_OPTION = typer.Option(
    "ransac", "--baseline", help="Comparator: 'ransac' or 'none'"
)
TRUTH_OPTION = typer.Option(None, "--truth", help="Ground-truth 0/1 labels for scoring")

# Anchor options
STRIDE_OPTION = typer.Option(None, "--stride", help="Anchor lattice stride in meters")
MIN_POINTS_OPTION = typer.Option(
    None, "--min-points", help="Points needed to keep an anchor"
)
KEPT_ONLY_OPTION = typer.Option(
    False, "--kept-only", help="Write only anchors that survive pruning"
)
NMS_TOP_N_OPTION = typer.Option(
    None, "--nms-top-n", help="Run NMS on kept anchors, scored by point count"
)

# Feature options
SLICES_OPTION = typer.Option(None, "--slices", help="Number of height slices")
PGM_DIR_OPTION = typer.Option(
    None, "--pgm-dir", help="Directory for one 8-bit PGM image per channel"
)

# Augment options
LABELS_OPTION = typer.Option(..., "--labels", help="Labels JSON for the input frame")
OUT_LABELS_OPTION = typer.Option(
    ..., "--out-labels", help="Where to write augmented labels"
)
FLIP_OPTION = typer.Option(False, "--flip", help="Mirror the frame about the x axis")
ROTATE_OPTION = typer.Option(0.0, "--rotate", help="Yaw rotation in radians")
DONORS_OPTION = typer.Option(None, "--donors", help="Frame to cut donor objects from")
DONOR_LABELS_OPTION = typer.Option(
    None, "--donor-labels", help="Labels JSON for the donor frame"
)
MAX_OBJECTS_OPTION = typer.Option(
    None, "--max-objects", help="Skip transplant when the frame has more objects"
)

# Synth options
OUT_DIR_OPTION = typer.Option(
    ..., "--out-dir", help="Directory for the generated frame"
)
KIND_OPTION = typer.Option("flat", "--kind", help="flat, slope, crown, step or terrace")
OBJECTS_OPTION = typer.Option(0, "--objects", min=0, help="Number of cars to scatter")
DENSITY_OPTION = typer.Option(10.0, "--density", help="Ground points per square meter")
NOISE_OPTION = typer.Option(0.02, "--noise", help="Gaussian height noise in meters")
NAME_OPTION = typer.Option("scene", "--name", help="Stem for the output files")

# Bench options
POINTS_OPTION = typer.Option(None, "--points", help="Points in the benchmark frame")
REPS_OPTION = typer.Option(None, "--reps", help="Timed repetitions per method")
WARMUP_OPTION = typer.Option(None, "--warmup", help="Untimed warm-up runs")
SCALING_OPTION = typer.Option(
    False, "--scaling", help="Also time half and double the points"
)
JSON_OUT_OPTION = typer.Option(None, "--out", help="Write the JSON report here")


@contextmanager
def handle_errors() -> Iterator[None]:
    """Map library failures onto exit codes."""
    try:
        yield
    except (InputValidationError, ValidationError, FileNotFoundError) as e:
        console.print(f"[red]Error:[/red] {e!s}")
        raise typer.Exit(EXIT_INPUT) from e
    except AlgorithmError as e:
        console.print(f"[red]Error:[/red] {e!s}")
        raise typer.Exit(EXIT_ALGORITHM) from e


@app.callback()
def main(
    config: Optional[Path] = CONFIG_OPTION,
    verbose: bool = VERBOSE_OPTION,
) -> None:
    """Load settings and configure logging before any subcommand runs."""
    global settings  # noqa: PLW0603
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(message)s",
        handlers=[RichHandler(console=console, rich_tracebacks=True, show_path=False)],
        force=True,
    )
    with handle_errors():
        settings = load_settings(config)


def _configure(
    cell: Optional[float] = None,
    window: Optional[float] = None,
    tau_g: Optional[float] = None,
) -> Settings:
    """Current settings with command-line flags applied on top."""
    return Settings.model_validate(
        {
            **settings.model_dump(),
            "grid": settings.grid.override(cell_size=cell),
            "filter": settings.filter.override(
                half_window_x=window, half_window_y=window
            ),
            "ground_tolerance": settings.ground_tolerance if tau_g is None else tau_g,
        }
    )


def _frames(source: Path) -> list[Path]:
    if source.is_dir():
        frames = sorted(source.glob("*.bin"))
        if not frames:
            raise InputValidationError(f"No .bin frames in {source}")
        return frames
    if not source.exists():
        raise FileNotFoundError(f"Input not found: {source}")
    return [source]


def _target(out: Path, frame: Path, suffix: str, many: bool) -> Path:
    return out / f"{frame.stem}{suffix}" if many else out


def _run_frames(
    source: Path, work: Callable[[Path, bool], dict[str, Any]], jobs: int
) -> list[dict[str, Any]]:
    """Apply ``work`` to every frame; results keep frame order."""
    frames = _frames(source)
    many = source.is_dir()
    if jobs == 1 or len(frames) == 1:
        return [work(frame, many) for frame in frames]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda frame: work(frame, many), frames))


def _ground(cloud: PointCloud, cfg: Settings) -> tuple[PointCloud, GroundSurface]:
    """Crop to the ROI and estimate the local ground surface."""
    cropped = crop_roi(cloud, cfg.roi)
    spec = GridSpec.from_roi(cfg.roi, cfg.grid.cell_size)
    gs = GroundEstimator(cfg.filter).estimate_surface(build_height_map(cropped, spec))
    return cropped, gs


def _per_input_point(inside: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Spread ROI labels back over the whole frame; outside points are 0."""
    full = np.zeros(inside.shape[0], dtype=bool)
    full[inside] = labels
    return full


def _summary(title: str, rows: list[dict[str, Any]], fields: list[str]) -> None:
    if len(rows) == 1:
        body = "\n".join(f"{name}: [bold]{rows[0][name]}[/bold]" for name in fields)
        console.print(Panel(body, title=title, expand=False))
        return
    table = Table(title=title)
    table.add_column("frame")
    for name in fields:
        table.add_column(name, justify="right")
    for row in rows:
        table.add_row(row["frame"], *(str(row[name]) for name in fields))
    console.print(table)


@app.command()
def surface(
    *,
    source: Path = IN_OPTION,
    out: Path = OUT_OPTION,
    cell: Optional[float] = CELL_OPTION,
    window: Optional[float] = WINDOW_OPTION,
    pgm: Optional[Path] = PGM_OPTION,
    jobs: int = JOBS_OPTION,
) -> None:
    """Estimate the local ground surface of each frame."""
    with handle_errors():
        cfg = _configure(cell, window)

        def work(frame: Path, many: bool) -> dict[str, Any]:
            _, gs = _ground(read_kitti_bin(frame), cfg)
            write_grid(_target(out, frame, ".gagr", many), gs)
            if pgm is not None:
                write_pgm(_target(pgm, frame, ".pgm", many), gs.ground_z, gs.valid)
            return {
                "frame": frame.name,
                "valid cells": int(gs.valid.sum()),
                "cells": gs.valid.size,
            }

        with console.status("[bold green]Estimating ground surface..."):
            rows = _run_frames(source, work, jobs)
    _summary("Ground Surface", rows, ["valid cells", "cells"])
    console.print("[bold green]Operation completed successfully! 🎉")


@app.command()
def segment(
    *,
    source: Path = IN_OPTION,
    out: Path = OUT_OPTION,
    tau_g: Optional[float] = TAU_G_OPTION,
    baseline: str = BASELINE_OPTION,
    truth: Optional[Path] = TRUTH_OPTION,
    cell: Optional[float] = CELL_OPTION,
    window: Optional[float] = WINDOW_OPTION,
    jobs: int = JOBS_OPTION,
) -> None:
    """Label points as ground with the local surface and, optionally, a RANSAC plane."""
    if baseline not in ("ransac", "none"):
        console.print(f"[red]Error:[/red] Unknown baseline '{baseline}'")
        raise typer.Exit(EXIT_INPUT)
    if truth is not None and source.is_dir():
        console.print("[red]Error:[/red] --truth needs a single frame")
        raise typer.Exit(EXIT_INPUT)

    with handle_errors():
        cfg = _configure(cell, window, tau_g)
        expected = read_ground_labels(truth) if truth is not None else None

        def work(frame: Path, many: bool) -> dict[str, Any]:
            full = read_kitti_bin(frame)
            inside = roi_mask(full, cfg.roi)
            cloud, gs = _ground(full, cfg)
            tolerance = cfg.ground_tolerance
            labels = _per_input_point(
                inside,
                GroundEstimator.classify_points(cloud, gs, tolerance).is_ground,
            )
            target = _target(out, frame, ".ground.txt", many)
            write_ground_labels(target, labels)
            row: dict[str, Any] = {
                "frame": frame.name,
                "points": len(full),
                "in ROI": len(cloud),
                "surface ground": int(labels.sum()),
            }
            if baseline == "ransac":
                fit = PlaneBaseline(cfg.ransac).fit_plane_ransac(cloud)
                plane = _per_input_point(
                    inside,
                    PlaneBaseline.classify_points_plane(
                        cloud, fit.model, tolerance
                    ).is_ground,
                )
                write_ground_labels(target.with_suffix(f".plane{target.suffix}"), plane)
                plane_json = target.parent / f"{frame.stem}.plane.json"
                with atomic_write(plane_json, "w") as f:
                    json.dump(fit.to_json(), f)
                    f.write("\n")
                row["plane ground"] = int(plane.sum())
                row["disagreements"] = int(np.count_nonzero(labels != plane))
            if expected is not None:
                if expected.shape[0] != len(full):
                    raise InputValidationError(
                        f"--truth has {expected.shape[0]} labels but "
                        f"{frame.name} has {len(full)} points"
                    )
                scores = classification_report(labels, expected)
                row["surface recall"] = f"{scores.recall:.4f}"
                row["surface precision"] = f"{scores.precision:.4f}"
                if baseline == "ransac":
                    scores = classification_report(plane, expected)
                    row["plane recall"] = f"{scores.recall:.4f}"
                    row["plane precision"] = f"{scores.precision:.4f}"
            return row

        with console.status("[bold green]Segmenting ground..."):
            rows = _run_frames(source, work, jobs)
    fields = [name for name in rows[0] if name != "frame"]
    _summary("Ground Segmentation", rows, fields)
    console.print("[bold green]Operation completed successfully! 🎉")


@app.command()
def anchors(
    *,
    source: Path = IN_OPTION,
    out: Path = OUT_OPTION,
    stride: Optional[float] = STRIDE_OPTION,
    min_points: Optional[int] = MIN_POINTS_OPTION,
    kept_only: bool = KEPT_ONLY_OPTION,
    nms_top_n: Optional[int] = NMS_TOP_N_OPTION,
    cell: Optional[float] = CELL_OPTION,
    window: Optional[float] = WINDOW_OPTION,
    jobs: int = JOBS_OPTION,
) -> None:
    """Place anchors on the ground surface and prune those over empty space."""
    with handle_errors():
        cfg = _configure(cell, window)
        engine = AnchorEngine(
            cfg.anchors.override(
                stride=stride, min_points=min_points, nms_top_n=nms_top_n
            )
        )

        def work(frame: Path, many: bool) -> dict[str, Any]:
            cloud, gs = _ground(read_kitti_bin(frame), cfg)
            candidates = engine.generate_anchors(gs)
            counts = integral(build_count_grid(cloud, gs.spec))
            pruned = engine.prune_anchors(candidates, counts)
            trimmed = kept_only or nms_top_n is not None
            result = pruned.kept_only() if trimmed else pruned
            if nms_top_n is not None:
                chosen = engine.select(result, result.point_counts.astype(np.float64))
                result = AnchorSet(
                    result.boxes[chosen],
                    result.point_counts[chosen],
                    result.kept[chosen],
                )
            write_boxes_jsonl(
                _target(out, frame, ".anchors.jsonl", many),
                result.boxes,
                extra={"count": result.point_counts, "kept": result.kept},
            )
            return {
                "frame": frame.name,
                "anchors": len(candidates),
                "kept": pruned.kept_count,
                "written": len(result),
            }

        with console.status("[bold green]Generating anchors..."):
            rows = _run_frames(source, work, jobs)
    _summary("Anchors", rows, ["anchors", "kept", "written"])
    console.print("[bold green]Operation completed successfully! 🎉")


@app.command()
def features(
    *,
    source: Path = IN_OPTION,
    out: Path = OUT_OPTION,
    slices: Optional[int] = SLICES_OPTION,
    pgm_dir: Optional[Path] = PGM_DIR_OPTION,
    cell: Optional[float] = CELL_OPTION,
    window: Optional[float] = WINDOW_OPTION,
    jobs: int = JOBS_OPTION,
) -> None:
    """Extract ground-relative slice and density channels."""
    with handle_errors():
        cfg = _configure(cell, window)
        extractor = FeatureExtractor(cfg.features.override(num_slices=slices))

        def work(frame: Path, many: bool) -> dict[str, Any]:
            cloud, gs = _ground(read_kitti_bin(frame), cfg)
            feats = extractor.extract_features(cloud, gs)
            write_channels(
                _target(out, frame, ".features.gagr", many),
                gs.spec,
                feats.stack(),
                gs.valid,
            )
            if pgm_dir is not None:
                channels = zip(feats.channel_names(), feats.stack())
                for name, values in channels:
                    write_pgm(pgm_dir / f"{frame.stem}.{name}.pgm", values, gs.valid)
            return {
                "frame": frame.name,
                "channels": feats.num_slices + 1,
                "occupied cells": int(np.count_nonzero(feats.density)),
            }

        with console.status("[bold green]Extracting features..."):
            rows = _run_frames(source, work, jobs)
    _summary("BEV Features", rows, ["channels", "occupied cells"])
    console.print("[bold green]Operation completed successfully! 🎉")


@app.command()
def augment(
    *,
    source: Path = IN_OPTION,
    labels: Path = LABELS_OPTION,
    out: Path = OUT_OPTION,
    out_labels: Path = OUT_LABELS_OPTION,
    flip: bool = FLIP_OPTION,
    rotate: float = ROTATE_OPTION,
    donors: Optional[Path] = DONORS_OPTION,
    donor_labels: Optional[Path] = DONOR_LABELS_OPTION,
    max_objects: Optional[int] = MAX_OBJECTS_OPTION,
    seed: Optional[int] = SEED_OPTION,
) -> None:
    """Flip, rotate and transplant objects onto free ground in one frame."""
    if (donors is None) != (donor_labels is None):
        console.print("[red]Error:[/red] --donors and --donor-labels go together")
        raise typer.Exit(EXIT_INPUT)

    with handle_errors():
        cfg = _configure()
        scene = Scene(read_kitti_bin(source), read_labels_json(labels))
        pool = []
        if donors is not None and donor_labels is not None:
            pool = extract_donors(
                read_kitti_bin(donors), read_labels_json(donor_labels)
            )
        augmenter = SceneAugmenter(
            cfg.augment.override(max_existing_objects=max_objects),
            seed=cfg.seed if seed is None else seed,
        )
        with console.status("[bold green]Augmenting frame..."):
            result = augmenter.augment_scene(
                scene,
                pool,
                GroundEstimator(cfg.filter),
                cfg.roi,
                GridSpec.from_roi(cfg.roi, cfg.grid.cell_size),
                cfg.ground_tolerance,
                flip=flip,
                alpha=rotate,
            )
            write_kitti_bin(out, result.scene.cloud)
            write_labels_json(out_labels, result.scene.boxes)

    console.print(
        Panel(
            f"Points: [bold]{len(scene.cloud)}[/bold] -> "
            f"[bold]{len(result.scene.cloud)}[/bold]\n"
            f"Objects: [bold]{len(scene.boxes)}[/bold] -> "
            f"[bold]{len(result.scene.boxes)}[/bold]\n"
            f"Transplanted: [bold]{len(result.placed)}[/bold] of {len(pool)}",
            title="Augmentation",
            expand=False,
        )
    )
    if result.unplaced:
        console.print(
            f"[yellow]No free ground for {len(result.unplaced)} donor(s)[/yellow]"
        )
    console.print("[bold green]Operation completed successfully! 🎉")


@app.command()
def synth(
    *,
    out_dir: Path = OUT_DIR_OPTION,
    kind: str = KIND_OPTION,
    objects: int = OBJECTS_OPTION,
    density: float = DENSITY_OPTION,
    noise: float = NOISE_OPTION,
    name: str = NAME_OPTION,
    seed: Optional[int] = SEED_OPTION,
) -> None:
    """Generate a synthetic frame with labels, true ground flags and true surface."""
    with handle_errors():
        cfg = _configure()
        terrain = TerrainSpec.model_validate(
            {
                "kind": kind,
                "point_density": density,
                "noise_sigma": noise,
                "seed": cfg.seed if seed is None else seed,
            }
        )
        with console.status("[bold green]Generating scene..."):
            boxes = scatter_objects(terrain, objects, cfg.roi)
            scene = generate_scene(terrain, boxes, cfg.roi)
            spec = GridSpec.from_roi(cfg.roi, cfg.grid.cell_size)
            write_kitti_bin(out_dir / f"{name}.bin", scene.cloud)
            write_labels_json(out_dir / f"{name}.json", scene.boxes)
            write_ground_labels(out_dir / f"{name}.ground.txt", scene.is_ground)
            write_grid(out_dir / f"{name}.truth.gagr", scene.true_surface(spec))

    console.print(
        Panel(
            f"Points: [bold]{len(scene.cloud)}[/bold] "
            f"(ground [bold]{int(scene.is_ground.sum())}[/bold])\n"
            f"Objects: [bold]{len(scene.boxes)}[/bold]\n"
            f"Written to: [bold]{out_dir}[/bold]",
            title=f"Synthetic {kind} scene",
            expand=False,
        )
    )
    console.print("[bold green]Operation completed successfully! 🎉")


@app.command()
def bench(
    *,
    points: Optional[int] = POINTS_OPTION,
    reps: Optional[int] = REPS_OPTION,
    warmup: Optional[int] = WARMUP_OPTION,
    scaling: bool = SCALING_OPTION,
    out: Optional[Path] = JSON_OUT_OPTION,
    seed: Optional[int] = SEED_OPTION,
) -> None:
    """Time the ground surface against the RANSAC plane on a synthetic frame."""
    with handle_errors():
        cfg = _configure()
        bench_cfg = cfg.bench.override(points=points, repetitions=reps, warmup=warmup)
        roi: RoiConfig = cfg.roi
        area = (roi.x_max - roi.x_min) * (roi.y_max - roi.y_min)
        terrain = TerrainSpec(
            kind="terrace",
            point_density=bench_cfg.points / area,
            seed=cfg.seed if seed is None else seed,
        )
        spec = GridSpec.from_roi(roi, cfg.grid.cell_size)
        with console.status("[bold green]Running benchmark...") as status:
            cloud = crop_roi(generate_scene(terrain, roi=roi).cloud, roi)
            result = bench_ground(
                cloud,
                spec,
                cfg.filter,
                cfg.ransac,
                bench_cfg.repetitions,
                bench_cfg.warmup,
            )
            gs = GroundEstimator(cfg.filter).estimate_surface(
                build_height_map(cloud, spec)
            )
            fit = PlaneBaseline(cfg.ransac).fit_plane_ransac(cloud)
            # cells near the terrace edges are within one window of a step
            band = max(cfg.filter.half_window_x, cfg.filter.half_window_y)
            accuracy = accuracy_report(gs, fit.model, terrain, band=band)
            report: dict[str, Any] = {
                "environment": environment_report(),
                **result.model_dump(),
                "accuracy": accuracy.model_dump(mode="json"),
            }
            if scaling:
                status.update("[bold blue]Measuring scaling...")
                sizes = [bench_cfg.points // 2, bench_cfg.points, bench_cfg.points * 2]
                curve = bench_scaling(
                    terrain,
                    roi,
                    cfg.grid.cell_size,
                    cfg.filter,
                    cfg.ransac,
                    sizes,
                    bench_cfg.repetitions,
                )
                report["scaling"] = [p.model_dump() for p in curve]

    table = Table(title=f"Ground estimation on {len(cloud):,} points")
    table.add_column("method")
    table.add_column("median ms", justify="right")
    table.add_column("p95 ms", justify="right")
    for row in (result.surface, result.plane):
        table.add_row(row.method, f"{row.median_ms:.2f}", f"{row.p95_ms:.2f}")
    console.print(table)
    console.print(f"Speedup: [bold]{result.speedup:.1f}x[/bold]")

    errors = Table(title="Ground RMS error (m)")
    errors.add_column("range")
    errors.add_column("cells", justify="right")
    errors.add_column("surface", justify="right")
    errors.add_column("plane", justify="right")
    errors.add_row(
        "all",
        str(accuracy.cells),
        f"{accuracy.surface_rms:.3f}",
        f"{accuracy.plane_rms:.3f}",
    )
    for category, part in accuracy.by_range.items():
        errors.add_row(
            category.value,
            str(part.cells),
            f"{part.surface_rms:.3f}",
            f"{part.plane_rms:.3f}",
        )
    console.print(errors)

    if out is not None:
        with atomic_write(out, "w") as f:
            json.dump(report, f, indent=2)
            f.write("\n")
    else:
        console.print_json(data=report)
    console.print("[bold green]Operation completed successfully! 🎉")


if __name__ == "__main__":
    app()
