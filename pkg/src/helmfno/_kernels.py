"""Pure-numpy leapfrog loop; the fallback for the compiled ``_fdtd_ext``."""
import numpy as np

C0 = -2.5
C1 = 4.0 / 3.0
C2 = -1.0 / 12.0


def leapfrog(v2dt2, damp, src_iz, src_ix, src, idx2, idz2, n_t, pad, nz, nx):
    NZ, NX = v2dt2.shape
    pp = np.zeros((NZ + 4, NX + 4))
    pc = np.zeros((NZ + 4, NX + 4))
    pn = np.zeros((NZ + 4, NX + 4))
    out = np.zeros((n_t, nz, nx))
    si, sj = src_iz + 2, src_ix + 2
    core = (slice(2, NZ + 2), slice(2, NX + 2))
    phys = (slice(pad + 2, pad + 2 + nz), slice(pad + 2, pad + 2 + nx))

    for n in range(n_t - 1):
        c = pc[core]
        lx = (C2 * (pc[2:-2, :-4] + pc[2:-2, 4:]) + C1 * (pc[2:-2, 1:-3] + pc[2:-2, 3:-1])) + C0 * c
        lz = (C2 * (pc[:-4, 2:-2] + pc[4:, 2:-2]) + C1 * (pc[1:-3, 2:-2] + pc[3:-1, 2:-2])) + C0 * c
        lap = lx * idx2 + lz * idz2
        pn[core] = (2.0 * c - pp[core]) + v2dt2 * lap
        pn[si, sj] = pn[si, sj] - v2dt2[src_iz, src_ix] * src[n]
        pn[core] *= damp
        pc[core] *= damp
        pp, pc, pn = pc, pn, pp
        out[n + 1] = pc[phys]
        if not np.isfinite(pc[si, sj]):
            raise FloatingPointError(f"non-finite pressure at step {n + 1}")
    return out
