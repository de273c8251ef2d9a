"""NumPy implementations of the numeric hot-path kernels.

The compiled extension ``taen.kernels._ckernels`` mirrors this module
function for function; ``taen.kernels`` selects one at import time.
All kernels take and return float64 C-contiguous arrays.
"""

import numpy as np

# Added inside the square root when normalizing, so a zero row divides by
# 1e-6 instead of 0. Keeps every unit-norm row within 1e-9 of norm 1 for
# inputs of norm >= ~1e-1.5.
NORM_EPS = 1e-12


def pool_segments(frames, a):
    """Mean-pool T rows into `a` contiguous blocks.

    Blocks partition the rows in order; earlier blocks get the extra row
    when T % a != 0. When T < a the trailing empty blocks replicate the
    last non-empty pooled row.
    """
    T = frames.shape[0]
    out = np.empty((a, frames.shape[1]), dtype=np.float64)
    base, rem = divmod(T, a)
    start = 0
    for i in range(a):
        size = base + (1 if i < rem else 0)
        if size == 0:
            out[i] = out[i - 1]
        else:
            out[i] = frames[start : start + size].mean(axis=0)
            start += size
    return out


def normalize_rows(x):
    """Scale each row to unit Euclidean norm (eps-guarded).

    Returns (normalized rows, per-row norms). The guarded norm is
    sqrt(sum(x**2) + NORM_EPS).
    """
    norms = np.sqrt(np.einsum("ij,ij->i", x, x) + NORM_EPS)
    return x / norms[:, None], norms


def normalize_rows_backward(y, norms, grad_y):
    """Gradient of normalize_rows w.r.t. its input.

    Per row: (g - <g, y> y) / n, the upstream gradient projected onto the
    tangent space of the sphere and rescaled by the pre-normalization norm.
    """
    dots = np.einsum("ij,ij->i", grad_y, y)
    return (grad_y - dots[:, None] * y) / norms[:, None]


def trajectory_distances(traj, protos):
    """Mean per-index cosine distance between `traj` (a x e) and each of
    the n class trajectories in `protos` (n x a x e). Returns shape (n,)."""
    a = traj.shape[0]
    sims = np.einsum("ie,nie->n", traj, protos)
    return (a - sims) / a


def test_distances(traj, protos, w_aff, w_mot, motion_sign):
    """Test-time trajectory distance of `traj` against n class trajectories.

    Per class: w_aff * sum_i (1 - <E_i, R_i>)
             + motion_sign * w_mot * sum_i <E_{i+1}-E_i, R_{i+1}-R_i>.
    motion_sign is -1.0 in the default aligned-is-closer mode, +1.0 in
    literal mode. Returns shape (n,).
    """
    a = traj.shape[0]
    sims = np.einsum("ie,nie->n", traj, protos)
    out = w_aff * (a - sims)
    if a > 1 and w_mot != 0.0:
        d_traj = np.diff(traj, axis=0)
        d_protos = np.diff(protos, axis=1)
        out = out + motion_sign * w_mot * np.einsum("ie,nie->n", d_traj, d_protos)
    return out
