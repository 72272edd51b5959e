"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--sizes 500 1000 2000] [--dim 64] [--repeat 3]

Reports the best wall time per kernel and backend, checks that both backends
return identical bits, and times one end-to-end prune of the 32x14x14 fixture.
"""
import argparse
import time

import numpy as np

from tango import kernels
from tango.merging import PruneConfig, prune_video
from tango.token_store import SceneSpec, synth_video


def best_of(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[500, 1000, 2000])
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    backends = kernels.available_backends()
    print(f"backends: {', '.join(backends)}; threads: {kernels.thread_count()}")
    rng = np.random.default_rng(0)
    header = f"{'kernel':<12}{'n':>6}" + "".join(f"{b:>12}" for b in backends) + "   speedup  identical"
    print(header)
    for n in args.sizes:
        x = rng.standard_normal((n, args.dim))
        frames = rng.standard_normal((32, n // 8 or 1, args.dim)).astype(np.float32)
        centers = np.arange(0, n, max(1, n // 50))
        with kernels.use_backend(backends[0]):
            D = kernels.pairwise_distances(x)
            rho = kernels.knn_density(D, 7)
        cases = {
            "distances": lambda: kernels.pairwise_distances(x),
            "knn_density": lambda: kernels.knn_density(D, 7),
            "delta": lambda: kernels.delta_distance(D, rho),
            "assign": lambda: kernels.assign_nearest(D, centers),
            "adj_cosine": lambda: kernels.adjacent_cosine(frames),
        }
        for name, fn in cases.items():
            times, outs = [], []
            for b in backends:
                with kernels.use_backend(b):
                    t, out = best_of(fn, args.repeat)
                times.append(t)
                outs.append(np.asarray(out).tobytes())
            speed = times[-1] / times[0] if len(times) > 1 else 1.0
            same = all(o == outs[0] for o in outs)
            print(f"{name:<12}{n:>6}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times) + f"{speed:>9.1f}x  {same}")

    video = synth_video(SceneSpec(32, 14, 14, 32, n_blobs=4, amplitude=1, sigma=0.3, sink_index=0), seed=7)
    for b in backends:
        with kernels.use_backend(b):
            t, out = best_of(lambda: prune_video(video.grid, video.attn, PruneConfig(retention=0.1)), args.repeat)
        print(f"prune 32x196 r=0.1 [{b}]: {t * 1e3:.1f} ms ({len(out)} tokens)")


if __name__ == "__main__":
    main()
