"""Self-consistent electrical solve of one crossbar column with parasitics.

Topology: the bitline is driven from one end through ``r_driver`` plus one
per-cell segment of ``r_bl_per_cell`` per row; every row's cell bridges the
bitline to the sense line; the sense line runs through per-cell
``r_sl_per_cell`` segments into an op-amp virtual ground (0 V, which is why
``r_sink`` never appears).  With ``topology="opposite"`` the sense pad sits
at the far end from the driver (worst case, default); ``"same"`` puts both
pads at row 0.

Segment currents follow from charge conservation: the bitline segment
arriving at row k carries the sum of cell currents at rows >= k, and the
sense-line segment leaving row k toward the pad carries the sum of cell
currents already collected on that side.  Three solvers share this wiring:

* ``solve_column_fast`` - damped fixed-point iteration on the cell-current
  vector.  Cheap (O(n) per sweep via cumulative sums) and batched.
* ``solve_column_dense`` - full nodal analysis with 2n unknown node
  voltages and Newton-Raphson on the nonlinear cell currents.  Slower;
  used to validate the fast path.
* ``solve_column_linear_ladder`` - closed-form ladder solution by affine
  transfer-matrix cascade, valid only for linear (ohmic) cells; used to
  validate the dense path.

Each column is solved independently: activations drive access-transistor
gates, which draw no steady-state row current, so rows do not couple.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .devices import DeviceModel, WireModel
from .errors import DomainError, ShapeError, SolverError

__all__ = [
    "ColumnProblem",
    "ColumnSolveResult",
    "FastBatchResult",
    "solve_column_fast",
    "solve_columns_fast",
    "solve_column_dense",
    "solve_column_linear_ladder",
    "ideal_column_current",
]

TOPOLOGIES = ("opposite", "same")


@dataclass(frozen=True, eq=False)
class ColumnProblem:
    """One column: stored bits, gate bits, device/wire models, drive voltage."""

    n: int
    stored_bits: np.ndarray
    gate_bits: np.ndarray
    device: DeviceModel
    wire: WireModel
    v_drive: float
    topology: str = "opposite"

    def __post_init__(self):
        stored = np.asarray(self.stored_bits, dtype=np.uint8)
        gates = np.asarray(self.gate_bits, dtype=np.uint8)
        if stored.shape != (self.n,) or gates.shape != (self.n,):
            raise ShapeError(
                f"ColumnProblem: expected length-{self.n} bit vectors, got "
                f"{stored.shape} and {gates.shape}"
            )
        for name, arr in (("stored_bits", stored), ("gate_bits", gates)):
            if arr.size and arr.max() > 1:
                raise DomainError(f"ColumnProblem: {name} must be 0/1")
        if self.v_drive <= 0:
            raise DomainError("ColumnProblem: v_drive must be > 0")
        if self.topology not in TOPOLOGIES:
            raise DomainError(f"ColumnProblem: topology must be one of {TOPOLOGIES}")
        object.__setattr__(self, "stored_bits", stored)
        object.__setattr__(self, "gate_bits", gates)


@dataclass(frozen=True, eq=False)
class ColumnSolveResult:
    """Converged (or flagged) state of one column solve.

    ``residual`` is the exit value of the solver's convergence metric: the
    max relative cell-current update for the fast solver, the max KCL
    violation normalized by i_on for the dense solver.
    """

    i_out: float
    v_bl: np.ndarray
    v_sl: np.ndarray
    i_cell: np.ndarray
    iterations: int
    converged: bool
    residual: float


@dataclass(frozen=True, eq=False)
class FastBatchResult:
    """Batch counterpart of :class:`ColumnSolveResult` (arrays over B problems)."""

    i_out: np.ndarray        # (B,)
    v_bl: np.ndarray         # (B, n)
    v_sl: np.ndarray         # (B, n)
    i_cell: np.ndarray       # (B, n)
    iterations: np.ndarray   # (B,)
    converged: np.ndarray    # (B,) bool
    residual: np.ndarray     # (B,)

    def __getitem__(self, b: int) -> ColumnSolveResult:
        return ColumnSolveResult(
            i_out=float(self.i_out[b]),
            v_bl=self.v_bl[b].copy(),
            v_sl=self.v_sl[b].copy(),
            i_cell=self.i_cell[b].copy(),
            iterations=int(self.iterations[b]),
            converged=bool(self.converged[b]),
            residual=float(self.residual[b]),
        )


def _line_voltages(i_cell: np.ndarray, wire: WireModel, v_drive: float, topology: str):
    """Node voltages on both lines given per-cell currents (B, n)."""
    r_bl = wire.r_bl_per_cell
    r_sl = wire.r_sl_per_cell
    total = i_cell.sum(axis=1, keepdims=True)
    # suffix[k] = sum of currents at rows >= k: what the BL still delivers at k
    suffix = np.cumsum(i_cell[:, ::-1], axis=1)[:, ::-1]
    bl_cum = np.cumsum(suffix, axis=1)
    v_bl = v_drive - wire.r_driver * total - r_bl * bl_cum
    if topology == "opposite":
        prefix = np.cumsum(i_cell, axis=1)
        sl_cum = np.cumsum(prefix[:, ::-1], axis=1)[:, ::-1]
    else:
        sl_cum = np.cumsum(suffix, axis=1)
    v_sl = r_sl * sl_cum
    return v_bl, v_sl


def solve_columns_fast(
    stored: np.ndarray,
    gates: np.ndarray,
    device: DeviceModel,
    wire: WireModel,
    v_drive: float,
    topology: str = "opposite",
    tol: float = 1e-6,
    max_iter: int = 200,
    damping: float = 0.5,
) -> FastBatchResult:
    """Damped fixed-point solve of many columns at once.

    ``stored`` and ``gates`` broadcast against each other to (B, n).  Each
    sweep recomputes line voltages from the current estimate, re-evaluates
    every cell at its local bias, and blends with factor ``damping``; a
    problem converges when its max cell-current change per sweep drops
    below ``tol * i_on``.  If a problem's residual grows, its damping is
    halved (never below damping/64) - pure safeguarding, the fixed point
    itself is unchanged.  Non-convergent problems are returned flagged,
    never silently.
    """
    if tol <= 0:
        raise DomainError("tol must be > 0")
    if not 0 < damping <= 1:
        raise DomainError("damping must be in (0, 1]")
    stored = np.atleast_2d(np.asarray(stored, dtype=np.float64))
    gates = np.atleast_2d(np.asarray(gates, dtype=np.float64))
    stored, gates = np.broadcast_arrays(stored, gates)
    stored = np.ascontiguousarray(stored)
    gates = np.ascontiguousarray(gates)
    B, n = stored.shape

    i_on = device.i_on
    i_cell = device.currents(stored, gates, np.full((B, n), v_drive))
    alpha = np.full(B, damping)
    prev_delta = np.full(B, np.inf)
    residual = np.full(B, np.inf)
    iters = np.zeros(B, dtype=np.int64)
    active = np.ones(B, dtype=bool)

    v_bl, v_sl = _line_voltages(i_cell, wire, v_drive, topology)
    for it in range(1, max_iter + 1):
        v_cell = np.clip(v_bl - v_sl, 0.0, None)
        i_new = device.currents(stored, gates, v_cell)
        delta = np.abs(i_new - i_cell).max(axis=1) / i_on
        residual[active] = delta[active]
        iters[active] = it
        worse = active & (delta > prev_delta)
        alpha[worse] = np.maximum(alpha[worse] * 0.5, damping / 64.0)
        prev_delta = delta
        just_done = active & (delta < tol)
        active &= ~just_done
        upd = alpha[:, None] * (i_new - i_cell)
        i_cell = np.where(active[:, None], i_cell + upd, np.where(just_done[:, None], i_new, i_cell))
        v_bl, v_sl = _line_voltages(i_cell, wire, v_drive, topology)
        if not active.any():
            break

    return FastBatchResult(
        i_out=i_cell.sum(axis=1),
        v_bl=v_bl,
        v_sl=v_sl,
        i_cell=i_cell,
        iterations=iters,
        converged=~active,
        residual=residual,
    )


def solve_column_fast(
    p: ColumnProblem,
    tol: float = 1e-6,
    max_iter: int = 200,
    damping: float = 0.5,
) -> ColumnSolveResult:
    """Single-column wrapper around :func:`solve_columns_fast`."""
    batch = solve_columns_fast(
        p.stored_bits[None, :],
        p.gate_bits[None, :],
        p.device,
        p.wire,
        p.v_drive,
        p.topology,
        tol=tol,
        max_iter=max_iter,
        damping=damping,
    )
    return batch[0]


class _UnionFind:
    def __init__(self, size: int):
        self.parent = list(range(size))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def solve_column_dense(
    p: ColumnProblem,
    tol: float = 1e-6,
    max_iter: int = 60,
) -> ColumnSolveResult:
    """Full nodal analysis of one column, Newton-Raphson on cell currents.

    All 2n node voltages are unknowns; zero-resistance segments collapse
    their end nodes exactly (no epsilon conductances), so degenerate
    parasitic-free problems solve cleanly.  The residual is the largest
    KCL violation across nodes, normalized by i_on.  A singular Jacobian
    raises :class:`SolverError`; running out of iterations returns a
    flagged result.
    """
    if tol <= 0:
        raise DomainError("tol must be > 0")
    n = p.n
    SRC, GND = 2 * n, 2 * n + 1
    bl = lambda k: k
    sl = lambda k: n + k

    resistors: list[tuple[int, int, float]] = [(SRC, bl(0), p.wire.r_driver + p.wire.r_bl_per_cell)]
    for k in range(n - 1):
        resistors.append((bl(k), bl(k + 1), p.wire.r_bl_per_cell))
        resistors.append((sl(k), sl(k + 1), p.wire.r_sl_per_cell))
    sense_row = n - 1 if p.topology == "opposite" else 0
    resistors.append((sl(sense_row), GND, p.wire.r_sl_per_cell))

    uf = _UnionFind(2 * n + 2)
    for a, b, r in resistors:
        if r == 0.0:
            uf.union(a, b)
    src_root, gnd_root = uf.find(SRC), uf.find(GND)
    if src_root == gnd_root:
        raise SolverError("drive shorted to ground by zero-resistance wiring")

    roots = sorted({uf.find(x) for x in range(2 * n + 2)})
    unknown = [r for r in roots if r not in (src_root, gnd_root)]
    index = {r: i for i, r in enumerate(unknown)}
    nu = len(unknown)

    fixed = {src_root: p.v_drive, gnd_root: 0.0}

    def potentials(u: np.ndarray) -> np.ndarray:
        pot = np.empty(2 * n + 2)
        for x in range(2 * n + 2):
            r = uf.find(x)
            pot[x] = fixed[r] if r in fixed else u[index[r]]
        return pot

    # start from the parasitic-free bias point
    u = np.array(
        [p.v_drive if any(uf.find(bl(k)) == r for k in range(n)) else 0.0 for r in unknown]
    )

    stored = p.stored_bits.astype(np.float64)
    gates = p.gate_bits.astype(np.float64)
    i_on = p.device.i_on

    def assemble(u: np.ndarray):
        pot = potentials(u)
        F = np.zeros(nu)
        J = np.zeros((nu, nu))
        for a, b, r in resistors:
            if r == 0.0:
                continue
            ra, rb = uf.find(a), uf.find(b)
            if ra == rb:
                continue
            g = 1.0 / r
            cur = g * (pot[a] - pot[b])
            ia = index.get(ra)
            ib = index.get(rb)
            if ia is not None:
                F[ia] += cur
                J[ia, ia] += g
                if ib is not None:
                    J[ia, ib] -= g
            if ib is not None:
                F[ib] -= cur
                J[ib, ib] += g
                if ia is not None:
                    J[ib, ia] -= g
        vd = pot[:n] - pot[n : 2 * n]
        icell = p.device.currents(stored, gates, vd)
        gcell = np.where(vd >= 0, p.device.conductances(stored, gates, vd), 0.0)
        for k in range(n):
            ra, rb = uf.find(bl(k)), uf.find(sl(k))
            ia = index.get(ra)
            ib = index.get(rb)
            if ia is not None:
                F[ia] += icell[k]
                J[ia, ia] += gcell[k]
                if ib is not None:
                    J[ia, ib] -= gcell[k]
            if ib is not None:
                F[ib] -= icell[k]
                J[ib, ib] += gcell[k]
                if ia is not None:
                    J[ib, ia] -= gcell[k]
        return F, J, pot, icell

    F, J, pot, icell = assemble(u)
    residual = float(np.abs(F).max() / i_on) if nu else 0.0
    converged = residual < tol
    it = 0
    while not converged and it < max_iter:
        it += 1
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"singular nodal system at iteration {it}") from exc
        # backtrack if the full step makes things worse (stiff cases)
        scale = 1.0
        while True:
            F2, J2, pot2, icell2 = assemble(u + scale * step)
            r2 = float(np.abs(F2).max() / i_on)
            if r2 < residual or scale < 1e-3:
                break
            scale *= 0.5
        u = u + scale * step
        F, J, pot, icell = F2, J2, pot2, icell2
        residual = r2
        converged = residual < tol

    return ColumnSolveResult(
        i_out=float(icell.sum()),
        v_bl=pot[:n].copy(),
        v_sl=pot[n : 2 * n].copy(),
        i_cell=np.asarray(icell, dtype=np.float64),
        iterations=it,
        converged=converged,
        residual=residual,
    )


def ideal_column_current(p: ColumnProblem) -> float:
    """Parasitic-free reference: (# stored-1 cells with gate on) * i_on."""
    on = int(((p.stored_bits > 0) & (p.gate_bits > 0)).sum())
    return on * p.device.i_on


def solve_column_linear_ladder(
    g_cell: np.ndarray,
    wire: WireModel,
    v_drive: float,
    topology: str = "opposite",
):
    """Closed-form solve for linear (ohmic) cells, i_k = g_k * v_k.

    Propagates the affine state (v_bl, v_sl, downstream BL current) as an
    exact linear function of the two scalar unknowns (total current I and
    v_sl at row 0), then closes the system with the two boundary
    conditions.  No iteration, no large linear solve.  Returns
    (i_out, v_bl, v_sl, i_cell).
    """
    g = np.asarray(g_cell, dtype=np.float64)
    if g.ndim != 1 or g.size == 0:
        raise ShapeError("g_cell must be a non-empty 1-D array")
    if np.any(g < 0):
        raise DomainError("cell conductances must be >= 0")
    if topology not in TOPOLOGIES:
        raise DomainError(f"topology must be one of {TOPOLOGIES}")
    n = len(g)
    r_bl, r_sl, r_drv = wire.r_bl_per_cell, wire.r_sl_per_cell, wire.r_driver

    # state rows: affine coefficients (cI, cV, const) for v_bl(k), v_sl(k), S_k
    # with unknowns z = (I_total, v_sl(0)); S_k = BL current flowing k -> k+1
    vb = np.array([-(r_drv + r_bl), 0.0, v_drive])
    vs = np.array([0.0, 1.0, 0.0])
    I = np.array([1.0, 0.0, 0.0])
    S = I - g[0] * (vb - vs)
    vb_hist = [vb]
    vs_hist = [vs]
    S_hist = [S]
    for k in range(n - 1):
        vb = vb - r_bl * S
        if topology == "opposite":
            vs = vs - r_sl * (I - S)
        else:
            vs = vs + r_sl * S
        S = S - g[k + 1] * (vb - vs)
        vb_hist.append(vb)
        vs_hist.append(vs)
        S_hist.append(S)

    # boundary conditions: no BL current past the last row, and the sense-pad
    # exit segment carries the full current at 0 V pad potential
    eq1 = S_hist[-1]
    if topology == "opposite":
        eq2 = vs_hist[-1] - r_sl * I
    else:
        eq2 = vs_hist[0] - r_sl * I
    A = np.array([[eq1[0], eq1[1]], [eq2[0], eq2[1]]])
    rhs = -np.array([eq1[2], eq2[2]])
    try:
        z = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise SolverError("degenerate linear ladder") from exc

    def ev(row):
        return row[0] * z[0] + row[1] * z[1] + row[2]

    v_bl = np.array([ev(r) for r in vb_hist])
    v_sl = np.array([ev(r) for r in vs_hist])
    i_cell = g * (v_bl - v_sl)
    return float(i_cell.sum()), v_bl, v_sl, i_cell
