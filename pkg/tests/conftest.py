"""Shared test helpers: independent reference implementations.

Everything here is deliberately written from scratch (loops, direct
formulas) so it cannot share a bug with the library code it checks.
"""

import numpy as np
import pytest


def signed_dot(i_signed, w_signed) -> int:
    """Plain signed dot product, the ground truth for all VMM paths."""
    return int(np.asarray(i_signed, dtype=np.int64) @ np.asarray(w_signed, dtype=np.int64))


def signed_vmm(acts, weights) -> np.ndarray:
    """(B, rows) x (rows, cols) integer VMM."""
    return np.asarray(acts, dtype=np.int64) @ np.asarray(weights, dtype=np.int64)


def software_bnn_forward(x, layer_params):
    """Loop-based BNN forward pass: list of ("dense", W) | ("sign",) |
    ("threshold", thresholds, gamma_signs) tuples."""
    x = np.asarray(x, dtype=np.int64)
    for params in layer_params:
        kind = params[0]
        if kind == "dense":
            x = x @ np.asarray(params[1], dtype=np.int64)
        elif kind == "sign":
            x = np.where(x >= 0, 1, -1)
        elif kind == "threshold":
            t, s = params[1], params[2]
            out = np.empty_like(x)
            for c in range(x.shape[-1]):
                if s[c] > 0:
                    out[..., c] = np.where(x[..., c] >= t[c], 1, -1)
                else:
                    out[..., c] = np.where(x[..., c] <= t[c], 1, -1)
            x = out
        else:
            raise AssertionError(kind)
    return x


def bilinear_reference(vg_axis, vd_axis, grid, vg, vd):
    """Scalar bilinear interpolation written independently (searchsorted-free)."""
    vg = min(max(vg, vg_axis[0]), vg_axis[-1])
    vd = min(max(vd, vd_axis[0]), vd_axis[-1])
    j = 0
    while j < len(vg_axis) - 2 and vg > vg_axis[j + 1]:
        j += 1
    i = 0
    while i < len(vd_axis) - 2 and vd > vd_axis[i + 1]:
        i += 1
    tg = (vg - vg_axis[j]) / (vg_axis[j + 1] - vg_axis[j])
    td = (vd - vd_axis[i]) / (vd_axis[i + 1] - vd_axis[i])
    a = grid[i][j] * (1 - tg) + grid[i][j + 1] * tg
    b = grid[i + 1][j] * (1 - tg) + grid[i + 1][j + 1] * tg
    return a * (1 - td) + b * td


def nodal_reference_linear(g_cells, r_bl, r_sl, r_driver, v_drive, topology="opposite"):
    """Independent linear nodal solve of one column, assembled from scratch.

    Nodes: 0..n-1 bitline, n..2n-1 sense line.  The driver reaches node 0
    through r_driver + r_bl; the sense pad hangs off the last (opposite)
    or first (same) sense node through r_sl at 0 V.
    """
    g_cells = np.asarray(g_cells, dtype=np.float64)
    n = len(g_cells)
    N = 2 * n
    G = np.zeros((N, N))
    rhs = np.zeros(N)

    def stamp(a, b, g):
        G[a, a] += g
        if b is not None:
            G[a, b] -= g
            G[b, a] -= g
            G[b, b] += g

    g_src = 1.0 / (r_driver + r_bl)
    stamp(0, None, g_src)
    rhs[0] += g_src * v_drive
    for k in range(n - 1):
        stamp(k, k + 1, 1.0 / r_bl)
        stamp(n + k, n + k + 1, 1.0 / r_sl)
    sense = n + (n - 1 if topology == "opposite" else 0)
    stamp(sense, None, 1.0 / r_sl)
    for k in range(n):
        stamp(k, n + k, g_cells[k])
    v = np.linalg.solve(G, rhs)
    i_cell = g_cells * (v[:n] - v[n:])
    return float(i_cell.sum()), v[:n], v[n:]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
