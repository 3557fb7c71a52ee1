"""Compare the compiled and numpy FDTD kernels.

Usage::

    python benchmarks/bench_fdtd.py --grid 70x70 --nt 1000 --reps 3

Both backends run the same leapfrog update, so the script also confirms the
pressure histories agree bit for bit.
"""
import argparse
import json
import sys
import time

import numpy as np

from helmfno import fdtd
from helmfno.fdtd import AbsorbingBoundary, SourceSpec, TimeGrid, simulate
from helmfno.velocity import Grid, synthesize


def time_backend(v, src, tg, boundary, backend, reps):
    simulate(v, src, TimeGrid(tg.dt, 10), boundary, backend=backend)  # warm up
    times, out = [], None
    for _ in range(reps):
        t = time.perf_counter()
        out = simulate(v, src, tg, boundary, backend=backend)
        times.append(time.perf_counter() - t)
    return times, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", type=Grid.parse, default=Grid())
    ap.add_argument("--nt", type=int, default=1000)
    ap.add_argument("--pad", type=int, default=120)
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--family", default="flat-A")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", action="store_true", help="print a JSON record instead of a table")
    args = ap.parse_args(argv)

    if fdtd._compiled is None:
        print("compiled kernel not built; run `pip install -e . --no-build-isolation`", file=sys.stderr)
        return 1
    v = synthesize(args.family, args.grid, args.seed)
    g = args.grid
    src = SourceSpec(0.5 * (g.n_x - 1) * g.dx, g.dz)
    tg = TimeGrid(0.001, args.nt)
    boundary = AbsorbingBoundary(args.pad)

    t_c, p_c = time_backend(v, src, tg, boundary, "cython", args.reps)
    t_py, p_py = time_backend(v, src, tg, boundary, "python", args.reps)
    identical = bool(np.array_equal(p_c.p, p_py.p))
    rec = {"grid": list(g.shape), "pad": args.pad, "n_t": args.nt,
           "cython_s": min(t_c), "python_s": min(t_py), "speedup": min(t_py) / min(t_c),
           "bit_identical": identical}
    if args.json:
        print(json.dumps(rec, indent=2))
    else:
        n = (g.n_z + 2 * args.pad) * (g.n_x + 2 * args.pad)
        print(f"grid {g.n_z}x{g.n_x} + {args.pad} pad ({n} nodes), {args.nt} steps, best of {args.reps}")
        print(f"  cython  {rec['cython_s']:8.3f} s")
        print(f"  python  {rec['python_s']:8.3f} s")
        print(f"  speedup {rec['speedup']:8.2f}x   bit-identical: {identical}")
    return 0 if identical else 2


if __name__ == "__main__":
    sys.exit(main())
