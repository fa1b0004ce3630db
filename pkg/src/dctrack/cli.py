"""Command-line entry points: track, train, eval, synth, bench."""

from __future__ import annotations

import functools
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import click
import numpy as np

from . import featcost, io, kalman, learn, metrics, track
from .config import Config, read_config
from .errors import (
    DimensionMismatch,
    EmptyFile,
    Infeasible,
    ParseError,
    TrackingError,
)
from .model import Detection, Track, TrackStatus, Zone, ZonePartition, WeightVector

EXIT_ERROR = 1
EXIT_IO = 2
EXIT_PARSE = 3
EXIT_INFEASIBLE = 4


def _exit_codes(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (ParseError, DimensionMismatch) as exc:
            click.echo(f"parse error: {exc}", err=True)
            sys.exit(EXIT_PARSE)
        except Infeasible as exc:
            click.echo(f"infeasible assignment: {exc}", err=True)
            sys.exit(EXIT_INFEASIBLE)
        except (OSError, EmptyFile) as exc:
            click.echo(f"i/o error: {exc}", err=True)
            sys.exit(EXIT_IO)
        except (TrackingError, ValueError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_ERROR)

    return wrapper


def _load_config(path) -> Config:
    return read_config(path) if path else Config()


@click.group()
def main():
    """Online multi-target tracker with zone-partitioned, learned assignment."""


@main.command("track")
@click.option("--det", "det_path", required=True, type=click.Path(exists=True),
              help="Detection file (MOT CSV) or a sequence directory.")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True),
              help="Trained model file.")
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Output tracking file (MOT CSV); zone and runtime logs go next to it.")
@click.option("--sidecar", type=click.Path(exists=True), default=None,
              help="Appearance sidecar CSV for the detections.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@_exit_codes
def cmd_track(det_path, model_path, out_path, sidecar, config_path):
    """Track a sequence and write MOT output plus zone/runtime logs."""
    cfg = _load_config(config_path)
    w, meta = learn.load_model(model_path)
    paths = io.sequence_paths(det_path)
    det_file = paths["det"]
    if det_file is None:
        raise EmptyFile(f"no det.txt under {det_path}")
    sidecar = sidecar or paths["det_sidecar"]
    bounds = (cfg.scene_width, cfg.scene_height) if config_path else None
    dets_by_frame, bounds = io.read_detections(det_file, bounds=bounds, sidecar=sidecar)
    if (meta["scene_width"], meta["scene_height"]) not in ((1.0, 1.0), bounds):
        click.echo(
            f"note: model was trained with bounds "
            f"{meta['scene_width']}x{meta['scene_height']}, data uses {bounds[0]}x{bounds[1]}",
            err=True,
        )

    t0 = time.perf_counter()
    state, solutions, stats = track.run_sequence(dets_by_frame, w, cfg)
    elapsed = time.perf_counter() - t0

    io.write_mot(out_path, state.output_rows)
    _write_zone_log(out_path + ".zones.csv", dets_by_frame, solutions, stats)
    _write_runtime_log(out_path + ".runtime.csv", stats)
    n_frames = len(stats)
    fps = n_frames / elapsed if elapsed > 0 else float("inf")
    mean_beta = float(np.mean([s.beta for s in stats])) if stats else 0.0
    click.echo(
        f"tracked {n_frames} frames at {fps:.1f} fps; "
        f"{state.next_id - 1} tracks created, mean complex-zone fraction {mean_beta:.3f}"
    )


def _write_zone_log(path, dets_by_frame, solutions, stats):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("frame,zone,kind,n_tracks,n_dets,track_ids,det_indices\n")
        for stat, sol in zip(stats, solutions):
            for zi, zone in enumerate(sol.partition.zones):
                kind = zone.kind.value if zone.kind else "unset"
                tids = ";".join(str(t) for t in sorted(zone.track_indices))
                dids = ";".join(str(d) for d in sorted(zone.det_indices))
                fh.write(
                    f"{stat.frame},{zi},{kind},{len(zone.track_indices)},"
                    f"{len(zone.det_indices)},{tids},{dids}\n"
                )


def _write_runtime_log(path, stats):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("frame,n_active,n_occluded,n_detections,n_zones,beta,seconds\n")
        for s in stats:
            fh.write(
                f"{s.frame},{s.n_active},{s.n_occluded},{s.n_detections},"
                f"{s.n_zones},{s.beta:.4f},{s.seconds:.6f}\n"
            )


def _parse_noise(raw: str) -> io.NoiseSpec:
    parts = [float(v) for v in raw.split(",")]
    if len(parts) != 3:
        raise ValueError("--noise expects 'miss_rate,false_rate,jitter'")
    return io.NoiseSpec(miss_rate=parts[0], false_rate=parts[1], jitter=parts[2])


@main.command("train")
@click.option("--gt", "gt_path", required=True, type=click.Path(exists=True),
              help="Ground-truth file (MOT CSV) or a sequence directory.")
@click.option("--out-model", required=True, type=click.Path())
@click.option("--noise", default="0.05,0.05,0.002", show_default=True,
              help="miss_rate,false_rate,jitter applied to the ground truth.")
@click.option("--lambda", "lam", type=float, default=None,
              help="Regularization strength (defaults to the config value).")
@click.option("--passes", type=int, default=3, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@_exit_codes
def cmd_train(gt_path, out_model, noise, lam, passes, seed, config_path):
    """Learn the weight vector from ground truth plus synthetic detector noise."""
    cfg = _load_config(config_path)
    lam = lam if lam is not None else cfg.lambda_reg
    paths = io.sequence_paths(gt_path)
    if paths["gt"] is None:
        raise EmptyFile(f"no gt.txt under {gt_path}")
    bounds = (cfg.scene_width, cfg.scene_height) if config_path else None
    gt = io.read_gt(paths["gt"], bounds=bounds, sidecar=paths["gt_sidecar"])
    samples = learn.make_training_set(gt, _parse_noise(noise), seed=seed, cfg=cfg)
    if not samples:
        raise EmptyFile("no usable training samples in the ground truth")
    state = learn.run_training(samples, lam, passes, seed=seed, cfg=cfg)
    for p, (primal, hinges) in enumerate(zip(state.primal_history, state.hinge_history), 1):
        click.echo(f"pass {p}: primal {primal:.6f}, mean hinge {np.mean(hinges):.6f}")
    train_cfg = Config(**{**cfg.__dict__, "scene_width": gt.width, "scene_height": gt.height})
    learn.save_model(out_model, state.w, train_cfg)
    click.echo(f"saved model to {out_model} ({len(samples)} samples, {passes} passes)")


@main.command("eval")
@click.option("--gt", "gt_path", required=True, type=click.Path(exists=True))
@click.option("--hyp", "hyp_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--report-dir", type=click.Path(), default=None,
              help="Write metrics.csv/metrics.txt and a TL-curve figure here.")
@_exit_codes
def cmd_eval(gt_path, hyp_path, config_path, report_dir):
    """CLEAR MOT and trajectory measures of a hypothesis against ground truth."""
    cfg = _load_config(config_path)
    bounds = (cfg.scene_width, cfg.scene_height) if config_path else None
    gt_file = io.sequence_paths(gt_path)["gt"]
    gt = io.read_gt(gt_file, bounds=bounds)
    hyp = io.read_gt(hyp_path, bounds=bounds)
    summary = metrics.clear_mot(gt, hyp)
    lengths, auc = metrics.tl_curve(gt, hyp)
    name = os.path.basename(hyp_path)
    table = metrics.render_table([(name, summary)])
    click.echo(table)
    click.echo(f"TL AUC: {auc:.4f}")
    if report_dir:
        os.makedirs(report_dir, exist_ok=True)
        metrics.write_csv(os.path.join(report_dir, "metrics.csv"), [(name, summary)])
        with open(os.path.join(report_dir, "metrics.txt"), "w", encoding="utf-8") as fh:
            fh.write(table + f"\nTL AUC: {auc:.4f}\n")
        _plot_tl_curve(os.path.join(report_dir, "tl_curve.png"), lengths, auc)
        click.echo(f"report written to {report_dir}")


def _plot_tl_curve(path, lengths, auc):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.step(np.arange(1, lengths.size + 1), lengths, where="mid")
    ax.set_xlabel("ground-truth trajectory (descending)")
    ax.set_ylabel("correctly tracked length (frames)")
    ax.set_title(f"track-length curve (AUC {auc:.3f})")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


@main.command("synth")
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True),
              help="JSON scene description.")
@click.option("--out", "out_dir", required=True, type=click.Path())
@_exit_codes
def cmd_synth(spec_path, out_dir):
    """Generate a synthetic sequence directory (gt, detections, sidecars)."""
    spec = io.SynthSpec.from_json(spec_path)
    result = io.synth_sequence(spec)
    io.write_sequence_dir(out_dir, result)
    n_det = sum(len(v) for v in result.dets_by_frame.values())
    click.echo(
        f"wrote {out_dir}: {len(result.gt.ids())} targets, "
        f"{len(result.gt.frames)} frames, {n_det} detections"
    )


# ---------------------------------------------------------------------------
# Benchmark: partitioned vs single global assignment

BENCH_ZONE_SIZE = 6  # average elements per zone (tracks + detections)
_BENCH_W = np.array([0.3, 1.0, 1.0, 0.5, 0.5, 1.0, 1.0, 0.5, 0.5])


def _bench_track(tid: int, pos, cfg: Config) -> Track:
    return Track(
        id=tid,
        status=TrackStatus.ACTIVE,
        trajectory=[(1, (float(pos[0]), float(pos[1])))],
        kalman=kalman.init_state(pos, cfg.init_pos_var, cfg.init_vel_var),
    )


def build_bench_case(n_elements: int, beta: float, occ_frac: float, seed: int,
                     cfg: Config = None):
    """Zone-clustered tracks/detections plus shared occluded tracks.

    Returns (instance, partition, global_instance): the same scene built once
    with its zones and once as a single all-pairs matrix.
    """
    cfg = cfg or Config()
    rng = np.random.default_rng(seed)
    n_zones = max(1, round(n_elements / BENCH_ZONE_SIZE))
    n_complex = round(beta * n_zones)
    n_occ = round(occ_frac * n_elements)

    active: list = []
    dets: list = []
    zones: list = []
    half = BENCH_ZONE_SIZE // 2
    for zi in range(n_zones):
        center = rng.uniform(0.05, 0.95, 2)
        if zi < n_complex:
            # unbalanced on purpose; alternate direction to keep totals even
            n_t = half - 1 if zi % 2 == 0 else half + 1
            n_d = BENCH_ZONE_SIZE - n_t
        else:
            n_t = n_d = half
        t_idx = []
        d_idx = []
        for _ in range(n_t):
            pos = np.clip(center + rng.normal(0, 0.01, 2), 0.0, 1.0)
            t_idx.append(len(active))
            active.append(_bench_track(len(active) + 1, pos, cfg))
        for _ in range(n_d):
            pos = np.clip(center + rng.normal(0, 0.01, 2), 0.0, 1.0)
            d_idx.append(len(dets))
            dets.append(
                Detection(frame=2, pos=(float(pos[0]), float(pos[1])),
                          bbox=(float(pos[0]) * 1000, float(pos[1]) * 1000, 40.0, 80.0))
            )
        zones.append(Zone(frozenset(t_idx), frozenset(d_idx)))
    occluded = []
    for q in range(n_occ):
        pos = rng.uniform(0.05, 0.95, 2)
        t = _bench_track(10_000 + q, pos, cfg)
        t.status = TrackStatus.OCCLUDED
        t.frames_occluded = 1
        occluded.append(t)

    from .cluster import classify_zones

    partition = classify_zones(ZonePartition(tuple(zones)))
    instance = featcost.build_instance(active, occluded, dets, partition, _BENCH_W, cfg)
    one_zone = classify_zones(
        ZonePartition((Zone(frozenset(range(len(active))), frozenset(range(len(dets)))),))
    )
    global_instance = featcost.build_instance(
        active, occluded, dets, one_zone, _BENCH_W, cfg
    )
    return instance, partition, global_instance


def bench_point(n_elements: int, beta: float, occ_frac: float = 0.3, seed: int = 0,
                repeats: int = 5, cfg: Config = None, prebuilt=None) -> dict:
    """Median wall-clock of partitioned vs global solving for one grid point."""
    instance, partition, global_instance = prebuilt or build_bench_case(
        n_elements, beta, occ_frac, seed, cfg
    )
    components = featcost.split_components(instance, partition)
    t_part = []
    t_glob = []
    from . import assign

    for _ in range(repeats):
        t0 = time.perf_counter()
        for rows, cols in components:
            assign.solve(instance.cost[np.ix_(rows, cols)])
        t_part.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        assign.solve(global_instance.cost)
        t_glob.append(time.perf_counter() - t0)
    part = float(np.median(t_part))
    glob = float(np.median(t_glob))
    return {
        "n": n_elements,
        "beta": beta,
        "occ_frac": occ_frac,
        "t_partitioned": part,
        "t_global": glob,
        "speedup": glob / part if part > 0 else float("inf"),
    }


def run_bench(sizes, betas, occ_frac: float = 0.3, seed: int = 0, repeats: int = 5,
              cfg: Config = None) -> list:
    grid = [(n, b) for n in sizes for b in betas]
    workers = min(io.worker_count(), len(grid))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        cases = list(
            pool.map(lambda nb: build_bench_case(nb[0], nb[1], occ_frac, seed, cfg), grid)
        )
    results = []
    for (n, b), case in zip(grid, cases):
        results.append(
            bench_point(n, b, occ_frac, seed, repeats=repeats, cfg=cfg, prebuilt=case)
        )
    return results


@main.command("bench")
@click.option("--sizes", default="500", show_default=True,
              help="Comma-separated element counts N (tracks + detections).")
@click.option("--beta", default="0.1,0.3,0.5", show_default=True,
              help="Comma-separated complex-zone fractions.")
@click.option("--occ-frac", type=float, default=0.3, show_default=True)
@click.option("--repeats", type=int, default=5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_prefix", type=click.Path(), default=None,
              help="Write <out>.csv and <out>.png scaling reports.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@_exit_codes
def cmd_bench(sizes, beta, occ_frac, repeats, seed, out_prefix, config_path):
    """Compare partitioned assignment against one global Hungarian call."""
    cfg = _load_config(config_path)
    size_list = [int(v) for v in sizes.split(",")]
    beta_list = [float(v) for v in beta.split(",")]
    results = run_bench(size_list, beta_list, occ_frac, seed, repeats, cfg)
    click.echo(f"{'N':>6} {'beta':>6} {'global(s)':>12} {'partitioned(s)':>15} {'speedup':>9}")
    for r in results:
        click.echo(
            f"{r['n']:>6} {r['beta']:>6.2f} {r['t_global']:>12.6f} "
            f"{r['t_partitioned']:>15.6f} {r['speedup']:>9.2f}"
        )
    if out_prefix:
        with open(out_prefix + ".csv", "w", encoding="utf-8") as fh:
            fh.write("n,beta,occ_frac,t_global,t_partitioned,speedup\n")
            for r in results:
                fh.write(
                    f"{r['n']},{r['beta']},{r['occ_frac']},{r['t_global']!r},"
                    f"{r['t_partitioned']!r},{r['speedup']!r}\n"
                )
        _plot_bench(out_prefix + ".png", results)
        click.echo(f"report written to {out_prefix}.csv / {out_prefix}.png")


def _plot_bench(path, results):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.2))
    for n in sorted({r["n"] for r in results}):
        pts = sorted((r["beta"], r["speedup"]) for r in results if r["n"] == n)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=f"N={n}")
    ax.set_xlabel("complex-zone fraction")
    ax.set_ylabel("speedup over global assignment")
    ax.axhline(1.0, color="gray", lw=0.8, ls=":")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


if __name__ == "__main__":
    main()
