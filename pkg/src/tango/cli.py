"""Command-line interface: ``tango <subcommand> ...``.

Every subcommand computes its results fully in memory before writing any
file, so a failure never leaves partial outputs behind.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, kernels
from .accounting import RetentionSchedule, coefficient_ratio, load_model_config, report
from .dpc import ClusterParams, Euclidean, SpatioTemporal, cluster
from .errors import TangoError
from .merging import PruneConfig, Provenance, prune_video
from .oracle import run_oracles
from .segmentation import SegConfig, default_tau, optimal_segmentation
from .selection import SelectParams, global_query_scores, mask_sinks, select_salient
from .strope import RopeConfig, default_partition, grid_positions
from .token_store import (
    AttentionMap,
    SceneSpec,
    SinkSpec,
    TokenGrid,
    attn_to_bytes,
    grid_to_bytes,
    load_attn,
    load_grid,
    synth_video,
)


class CliError(Exception):
    pass


# -- shared helpers ---------------------------------------------------------------


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _parse_indices(text: Optional[str]) -> SinkSpec:
    if not text:
        return SinkSpec()
    try:
        return SinkSpec(frozenset(int(v) for v in text.replace(" ", "").split(",") if v))
    except ValueError:
        raise CliError(f"bad index list {text!r}") from None


def _parse_dims(text: str) -> tuple[int, int, int]:
    try:
        dims = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise CliError(f"bad --rope-dims {text!r}") from None
    if len(dims) != 3:
        raise CliError("--rope-dims expects three comma-separated values t,h,w")
    return dims


def _read_kv(path: str) -> dict:
    """Simple ``key = value`` config file; keys use underscores."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line or line.startswith("["):
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = val.strip("\"'")
    return out


def _write_outputs(files: dict[Path, bytes]) -> None:
    for path, payload in files.items():
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(payload)


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        _write_outputs({Path(out): text.encode()})
    else:
        sys.stdout.write(text)


def _rope_from(args, dim: int) -> RopeConfig:
    theta_t = float(args.theta_t)
    theta_s = float(args.theta_s)
    if args.rope_dims:
        d_t, d_h, d_w = _parse_dims(args.rope_dims)
        cfg = RopeConfig(d_t, d_h, d_w, theta_t, theta_s, theta_s)
    else:
        cfg = default_partition(dim, theta_t, theta_s)
    cfg.check_dim(dim)
    return cfg


def _attention(args, grid: TokenGrid) -> AttentionMap:
    if getattr(args, "attn_file", None):
        attn = load_attn(args.attn_file)
        attn.check_matches(grid)
        return attn
    return global_query_scores(grid)


def _add_rope_flags(p: argparse.ArgumentParser, defaults: bool = True) -> None:
    p.add_argument("--theta-t", type=float, default=1e4 if defaults else None, help="temporal base frequency")
    p.add_argument("--theta-s", type=float, default=1e3 if defaults else None, help="spatial (h and w) base frequency")
    p.add_argument("--rope-dims", default=None, help="section widths t,h,w (default: split of the token dim)")
    p.add_argument("--no-tsa", action="store_true", default=None if not defaults else False,
                   help="use frame index instead of timestamp as the temporal coordinate")
    p.add_argument("--no-strope", action="store_true", default=None if not defaults else False,
                   help="cluster with plain Euclidean distance on normalized tokens")


def _add_attn_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--attn-file", help="attention scores (.ta)")
    g.add_argument("--attn", choices=["global-query"], default="global-query",
                   help="compute scores with a per-frame global query (default)")


# -- prune ---------------------------------------------------------------------------

PRUNE_DEFAULTS = {
    "retention": 0.1,
    "tau": None,  # resolved from retention
    "alpha": 1.5,
    "split": 0.6,
    "knn": 7,
    "sink_indices": "",
    "strategy": "tango",
    "theta_t": 1e4,
    "theta_s": 1e3,
    "rope_dims": None,
    "no_tsa": False,
    "no_strope": False,
    "sts_per_segment": False,
    "budget_base": "original",
    "max_segment_len": None,
}

_BOOL_KEYS = {"no_tsa", "no_strope", "sts_per_segment"}


def _coerce(key: str, val):
    if val is None:
        return None
    if key in _BOOL_KEYS:
        return val if isinstance(val, bool) else str(val).lower() in ("1", "true", "yes", "on")
    if key in ("retention", "tau", "alpha", "split", "theta_t", "theta_s"):
        return float(val)
    if key in ("knn", "max_segment_len"):
        return int(val)
    return str(val)


def resolve_prune_settings(args) -> dict:
    """CLI flags over config file over defaults."""
    file_vals = _read_kv(args.config) if getattr(args, "config", None) else {}
    unknown = set(file_vals) - set(PRUNE_DEFAULTS)
    if unknown:
        raise CliError(f"unknown config keys {sorted(unknown)}")
    out = {}
    for key, default in PRUNE_DEFAULTS.items():
        cli_val = getattr(args, key, None)
        if cli_val is not None and cli_val is not False:
            out[key] = _coerce(key, cli_val)
        elif key in file_vals:
            out[key] = _coerce(key, file_vals[key])
        else:
            out[key] = default
    if out["tau"] is None:
        out["tau"] = default_tau(out["retention"])
    return out


def build_prune_config(settings: dict, dim: int) -> PruneConfig:
    ns = argparse.Namespace(**settings)
    rope = _rope_from(ns, dim)
    return PruneConfig(
        retention=settings["retention"],
        budget_split=settings["split"],
        seg=SegConfig(tau=settings["tau"], max_segment_len=settings["max_segment_len"]),
        select=SelectParams(
            k=1,
            alpha=settings["alpha"],
            knn_k=settings["knn"],
            sink=_parse_indices(settings["sink_indices"]),
            attn_variant="provided" if settings.get("attn_file") else "global_query",
            use_strope=not settings["no_strope"],
        ),
        rope=rope,
        tsa=not settings["no_tsa"],
        sts_per_segment=settings["sts_per_segment"],
        budget_base=settings["budget_base"],
        strategy=settings["strategy"],
    )


def render_prune_outputs(out) -> dict[str, bytes]:
    n, d = out.tokens.shape
    flat = TokenGrid(out.tokens.reshape(1, 1, n, d), np.zeros(1, dtype=np.float32))
    pos_lines = ["index,t,h,w,frame,cell"]
    for i, (p, f, c) in enumerate(zip(out.positions, out.frames, out.cells)):
        pos_lines.append(f"{i},{float(p[0])!r},{int(p[1])},{int(p[2])},{int(f)},{int(c)}")
    prov_lines = ["index,provenance,source_count"]
    for i, (pv, sc) in enumerate(zip(out.provenance, out.source_counts)):
        prov_lines.append(f"{i},{Provenance(int(pv)).label},{int(sc)}")
    return {
        "pruned.tg": grid_to_bytes(flat),
        "positions.csv": ("\n".join(pos_lines) + "\n").encode(),
        "provenance.csv": ("\n".join(prov_lines) + "\n").encode(),
    }


def cmd_prune(args) -> int:
    if args.from_manifest:
        manifest = json.loads(Path(args.from_manifest).read_text())
        settings = manifest["config"]
        grid_path = manifest["inputs"]["grid"]["path"]
        attn_path = manifest["inputs"].get("attn", {}).get("path")
    else:
        if not args.grid:
            raise CliError("prune needs an input grid or --from-manifest")
        settings = resolve_prune_settings(args)
        grid_path, attn_path = args.grid, args.attn_file
    settings = dict(settings)
    settings["attn_file"] = attn_path

    t0 = time.perf_counter()
    grid_bytes = Path(grid_path).read_bytes()
    grid = load_grid(grid_path)
    attn = None
    inputs = {"grid": {"path": str(grid_path), "sha256": _sha256(grid_bytes)}}
    if attn_path:
        attn = load_attn(attn_path)
        attn.check_matches(grid)
        inputs["attn"] = {"path": str(attn_path), "sha256": _sha256(Path(attn_path).read_bytes())}
    cfg = build_prune_config(settings, grid.dim)
    t1 = time.perf_counter()
    out = prune_video(grid, attn, cfg)
    t2 = time.perf_counter()
    files = render_prune_outputs(out)
    out_dir = Path(args.out_dir)
    settings.pop("attn_file", None)
    manifest = {
        "tool": "tango",
        "version": __version__,
        "inputs": inputs,
        "config": settings,
        "resolved": {
            "budget": out.budget,
            "k_salient": out.k_salient,
            "k_merge": out.k_merge,
            "survivors_after_segmentation": out.survivors,
            "rope": dataclasses.asdict(cfg.rope),
            "kernel_backend": kernels.backend(),
        },
        "seed": args.seed,
        "timing_s": {"load": t1 - t0, "prune": t2 - t1, **out.timings},
        "outputs": {name: {"path": str(out_dir / name), "sha256": _sha256(b)} for name, b in files.items()},
    }
    payload = {out_dir / name: b for name, b in files.items()}
    payload[out_dir / "manifest.json"] = (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode()
    _write_outputs(payload)
    counts = out.provenance_counts()
    print(
        f"kept {len(out)} of {grid.frames * grid.tokens_per_frame} tokens "
        f"(budget {out.budget}; salient {counts['salient']}, merged {counts['merged']}, "
        f"pooled_static {counts['pooled_static']}) -> {out_dir}"
    )
    return 0


# -- segment / select / cluster ------------------------------------------------------------


def cmd_segment(args) -> int:
    grid = load_grid(args.grid)
    plan = optimal_segmentation(grid, SegConfig(tau=args.tau, max_segment_len=args.max_len))
    _emit(plan.to_text(), args.output)
    return 0


def cmd_select(args) -> int:
    grid = load_grid(args.grid)
    attn = mask_sinks(_attention(args, grid), _parse_indices(args.sink_indices))
    N = grid.tokens_per_frame
    total = grid.frames * N
    ids = np.arange(total)
    frames, cells = np.divmod(ids, N)
    positions = grid_positions(frames, cells, grid.timestamps, grid.grid_w, not args.no_tsa)
    params = SelectParams(
        k=args.k,
        alpha=args.alpha,
        knn_k=args.knn,
        attn_variant="provided" if args.attn_file else "global_query",
        use_strope=not args.no_strope,
    )
    if params.k > total:
        raise CliError(f"k={params.k} exceeds the {total} tokens")
    scores = attn.scores.reshape(-1)
    rope = _rope_from(args, grid.dim) if params.use_strope else None
    sel = select_salient(grid.frame_tokens().reshape(total, grid.dim), positions, scores, params, rope)
    lines = ["frame,cell,score,cluster"]
    for idx, c in sorted(zip(sel.indices.tolist(), sel.cluster_of.tolist())):
        lines.append(f"{idx // N},{idx % N},{scores[idx]!r},{c}")
    _emit("\n".join(lines) + "\n", args.output)
    return 0


def _cluster_tokens(grid: TokenGrid, frames: np.ndarray, k: int, knn: int, metric: str, args):
    N = grid.tokens_per_frame
    flat = grid.frame_tokens()
    cells = np.tile(np.arange(N), len(frames))
    frame_ids = np.repeat(frames, N)
    tokens = flat[frame_ids, cells]
    if metric == "st":
        pos = grid_positions(frame_ids, cells, grid.timestamps, grid.grid_w, not args.no_tsa)
        dist = SpatioTemporal(pos, _rope_from(args, grid.dim))
    else:
        dist = Euclidean()
    if k > len(tokens):
        raise CliError(f"k={k} exceeds the {len(tokens)} tokens")
    return frame_ids, cells, cluster(tokens, dist, ClusterParams(k, knn))


def cmd_cluster(args) -> int:
    grid = load_grid(args.grid)
    if args.frame is not None and not 0 <= args.frame < grid.frames:
        raise CliError(f"frame {args.frame} outside [0, {grid.frames})")
    frames = np.arange(grid.frames) if args.frame is None else np.array([args.frame])
    frame_ids, cells, res = _cluster_tokens(grid, frames, args.k, args.knn, args.metric, args)
    center_set = set(res.centers.tolist())
    lines = ["frame,cell,label,is_center"]
    for i, (f, c, lab) in enumerate(zip(frame_ids, cells, res.assignment)):
        lines.append(f"{int(f)},{int(c)},{int(lab)},{int(i in center_set)}")
    _emit("\n".join(lines) + "\n", args.output)
    return 0


# -- flops -------------------------------------------------------------------------------


def cmd_flops(args) -> int:
    model = load_model_config(args.model_config)
    if args.intra_layer is not None:
        schedule = RetentionSchedule.hybrid(model.layers, args.retention, args.intra_layer, args.intra_ratio)
    else:
        schedule = RetentionSchedule.constant(model.layers, args.retention)
    rep = report(model, args.seq, schedule)
    text = rep.to_csv() if args.csv else rep.to_text()
    if not args.csv:
        ratio = coefficient_ratio(model)
        text += f"simplified (mean) retention {rep.equivalent_retention:.4f}; exact FLOPs ratio {rep.flops_ratio:.4f}; linear/quadratic {float(ratio):.1f}\n"
    _emit(text, args.output)
    return 0


# -- synth ---------------------------------------------------------------------------------


def cmd_synth(args) -> int:
    spec = SceneSpec(
        frames=args.frames,
        height=args.height,
        width=args.width,
        dim=args.dim,
        n_blobs=args.blobs,
        amplitude=args.amplitude,
        sigma=args.sigma,
        blob_size=args.blob_size,
        frame_interval=args.interval,
        cut_at=args.cut_at,
        sink_index=args.sink_index,
    )
    video = synth_video(spec, args.seed)
    files = {Path(args.output): grid_to_bytes(video.grid)}
    if args.attn_out:
        files[Path(args.attn_out)] = attn_to_bytes(video.attn)
    _write_outputs(files)
    print(f"wrote {spec.frames}x{spec.height}x{spec.width}x{spec.dim} grid to {args.output}")
    return 0


# -- viz -----------------------------------------------------------------------------------


def palette(n: int) -> np.ndarray:
    """Deterministic RGB colors for labels ``0 .. n-1``, distinct for up to 4096 labels."""
    colors = np.empty((n, 3), dtype=np.uint8)
    for i in range(n):
        r, g, _ = _hsv_to_rgb((i * 0.618033988749895) % 1.0, 0.65, 0.95)
        # low bits carry the label so hue collisions cannot merge two labels
        colors[i] = (r, (g & 0xF0) | ((i >> 8) & 0x0F), i & 0xFF)
    return colors


def _hsv_to_rgb(h: float, s: float, v: float) -> tuple[int, int, int]:
    i = int(h * 6) % 6
    f = h * 6 - int(h * 6)
    p, q, t = v * (1 - s), v * (1 - f * s), v * (1 - (1 - f) * s)
    r, g, b = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i]
    return int(r * 255), int(g * 255), int(b * 255)


def ppm_bytes(labels: np.ndarray, colors: np.ndarray, scale: int = 1) -> bytes:
    h, w = labels.shape
    img = colors[labels]
    if scale > 1:
        img = np.repeat(np.repeat(img, scale, axis=0), scale, axis=1)
    return f"P6\n{w * scale} {h * scale}\n255\n".encode() + img.astype(np.uint8).tobytes()


def sorted_score_csv(scores: np.ndarray) -> str:
    """Mean over frames of each frame's descending-sorted unmasked scores, by rank."""
    rows = []
    for frame in scores:
        live = np.sort(frame[~np.isneginf(frame)])[::-1]
        rows.append(live)
    width = min(len(r) for r in rows)
    mean = np.mean([r[:width] for r in rows], axis=0) if width else np.zeros(0)
    lines = ["rank,score"] + [f"{i + 1},{float(v)!r}" for i, v in enumerate(mean)]
    return "\n".join(lines) + "\n"


def cmd_viz(args) -> int:
    grid = load_grid(args.grid)
    attn = mask_sinks(_attention(args, grid), _parse_indices(args.sink_indices))
    H, W = grid.grid_h, grid.grid_w
    colors = palette(args.k)
    files = {}
    for f in range(grid.frames):
        _, _, res = _cluster_tokens(grid, np.array([f]), args.k, args.knn, args.metric, args)
        files[Path(args.out_dir) / f"clusters_{f:04d}.ppm"] = ppm_bytes(res.assignment.reshape(H, W), colors, args.scale)
    files[Path(args.out_dir) / "scores_sorted.csv"] = sorted_score_csv(attn.scores).encode()
    _write_outputs(files)
    print(f"wrote {grid.frames} cluster maps and scores_sorted.csv to {args.out_dir}")
    return 0


# -- oracle ----------------------------------------------------------------------------------


def cmd_oracle(args) -> int:
    checks = run_oracles(
        seed=args.seed,
        seg_cases=args.seg_cases,
        cluster_cases=args.cluster_cases,
        max_n=args.max_n,
        rotation_cases=args.rotation_cases,
        forced_bug=args.forced_bug,
    )
    for c in checks:
        print(c.line())
    return 0 if all(c.passed for c in checks) else 1


# -- parser ------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tango", description="Video token pruning toolkit")
    parser.add_argument("--version", action="version", version=f"tango {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prune", help="run the full pruning pipeline")
    p.add_argument("grid", nargs="?", help="input token grid (.tg)")
    _add_attn_flags(p)
    p.add_argument("--config", help="key = value file with prune settings")
    p.add_argument("--from-manifest", help="re-run with the inputs and settings of a manifest.json")
    p.add_argument("--retention", type=float)
    p.add_argument("--tau", type=float, help="static threshold (default 0.65 at 10%% retention, else 0.8)")
    p.add_argument("--alpha", type=float, help="candidate expansion coefficient")
    p.add_argument("--split", type=float, help="budget share for salient selection")
    p.add_argument("--knn", type=int, help="neighbours K for DPC-KNN density")
    p.add_argument("--sink-indices", help="comma-separated cell indices to mask, e.g. 28")
    p.add_argument("--strategy", choices=["tango", "uniform", "topk"])
    p.add_argument("--sts-per-segment", action="store_true", default=None)
    p.add_argument("--budget-base", choices=["original", "post_segmentation"])
    p.add_argument("--max-segment-len", type=int)
    p.add_argument("--seed", type=int, default=None, help="recorded in the manifest")
    p.add_argument("--out-dir", default="tango_out")
    _add_rope_flags(p, defaults=False)
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("segment", help="optimal temporal segmentation")
    p.add_argument("grid")
    p.add_argument("--tau", type=float, default=0.8)
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("select", help="diversity-driven salient token selection")
    p.add_argument("grid")
    _add_attn_flags(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--alpha", type=float, default=1.5)
    p.add_argument("--knn", type=int, default=7)
    p.add_argument("--sink-indices")
    p.add_argument("-o", "--output")
    _add_rope_flags(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("cluster", help="DPC-KNN labels for debugging")
    p.add_argument("grid")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--knn", type=int, default=7)
    p.add_argument("--metric", choices=["st", "euclidean"], default="st")
    p.add_argument("--frame", type=int, default=None, help="cluster one frame only (0-based)")
    p.add_argument("-o", "--output")
    _add_rope_flags(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("flops", help="LLM FLOPs and equivalent retention")
    p.add_argument("--model-config", default="qwen2-7b", help="preset name or key = value file")
    p.add_argument("--seq", type=int, required=True)
    p.add_argument("--retention", type=float, default=1.0)
    p.add_argument("--intra-layer", type=int, default=None)
    p.add_argument("--intra-ratio", type=float, default=0.5)
    p.add_argument("--csv", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("synth", help="generate a synthetic token video")
    p.add_argument("--frames", type=int, default=32)
    p.add_argument("--height", type=int, default=14)
    p.add_argument("--width", type=int, default=14)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--blobs", type=int, default=3)
    p.add_argument("--amplitude", type=int, default=1)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--blob-size", type=int, default=2)
    p.add_argument("--interval", type=float, default=0.5)
    p.add_argument("--cut-at", type=int, default=None)
    p.add_argument("--sink-index", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--attn-out")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("viz", help="per-frame cluster maps (PPM) and sorted-score CSV")
    p.add_argument("grid")
    _add_attn_flags(p)
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--knn", type=int, default=7)
    p.add_argument("--metric", choices=["st", "euclidean"], default="st")
    p.add_argument("--sink-indices")
    p.add_argument("--scale", type=int, default=1, help="pixels per grid cell")
    p.add_argument("--out-dir", required=True)
    _add_rope_flags(p)
    p.set_defaults(func=cmd_viz)

    p = sub.add_parser("oracle", help="compare fast paths against brute-force references")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seg-cases", type=int, default=500)
    p.add_argument("--cluster-cases", type=int, default=200)
    p.add_argument("--max-n", type=int, default=200)
    p.add_argument("--rotation-cases", type=int, default=200)
    p.add_argument("--forced-bug", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (TangoError, CliError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"tango {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
