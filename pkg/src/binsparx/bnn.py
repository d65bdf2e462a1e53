"""Binary tensor domain, AND-domain dot products, and crossbar tiling.

Weights and activations live in the signed domain {-1,+1}; the hardware
stores and applies them in the {0,1} domain via v = 2*v' - 1.  The identity

    sum(I * W) = 4*sum(I'*W') - 2*sum(I') - 2*sum(W') + n

turns the signed dot product into an AND-plane count plus integer pre/post
arithmetic, so a plain AND-capable memory array can compute it.  Everything
in this module is exact integer math; no floating point is involved.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ShapeError

__all__ = [
    "BinaryTensor",
    "MappedTensor",
    "TilePlan",
    "MultiBitPlan",
    "WeightTile",
    "TiledWeights",
    "to_mapped",
    "to_signed",
    "nandnet_dot",
    "tile_weights",
    "multibit_partial_sums",
]


def _int_array(values, name: str) -> np.ndarray:
    a = np.asarray(values)
    if a.dtype.kind == "f":
        r = np.rint(a)
        if not np.array_equal(r, a):
            raise DomainError(f"{name}: non-integer elements present")
        a = r
    if a.dtype.kind not in "iu":
        try:
            a = a.astype(np.int64)
        except (TypeError, ValueError) as exc:
            raise DomainError(f"{name}: not an integer array") from exc
    return a


@dataclass(frozen=True, eq=False)
class BinaryTensor:
    """A tensor with every element in {-1,+1} (signed domain), row-major.

    The wrapped array is int8 and must not be mutated after construction.
    """

    values: np.ndarray

    def __post_init__(self):
        a = _int_array(self.values, "BinaryTensor")
        if a.size and not np.isin(a, (-1, 1)).all():
            bad = a.flat[int(np.argmax(~np.isin(a, (-1, 1)).ravel()))]
            raise DomainError(f"BinaryTensor: element {bad} outside {{-1,+1}}")
        object.__setattr__(self, "values", np.ascontiguousarray(a, dtype=np.int8))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim


@dataclass(frozen=True, eq=False)
class MappedTensor:
    """A tensor with every element in {0,1} (hardware domain), row-major."""

    values: np.ndarray

    def __post_init__(self):
        a = _int_array(self.values, "MappedTensor")
        if a.size and not np.isin(a, (0, 1)).all():
            bad = a.flat[int(np.argmax(~np.isin(a, (0, 1)).ravel()))]
            raise DomainError(f"MappedTensor: element {bad} outside {{0,1}}")
        object.__setattr__(self, "values", np.ascontiguousarray(a, dtype=np.int8))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim


def to_mapped(t: BinaryTensor) -> MappedTensor:
    """Map signed {-1,+1} to hardware {0,1}: v' = (v + 1) / 2."""
    if not isinstance(t, BinaryTensor):
        t = BinaryTensor(t)
    return MappedTensor((t.values.astype(np.int16) + 1) // 2)


def to_signed(m: MappedTensor) -> BinaryTensor:
    """Inverse of :func:`to_mapped`: v = 2*v' - 1."""
    if not isinstance(m, MappedTensor):
        m = MappedTensor(m)
    return BinaryTensor(2 * m.values.astype(np.int16) - 1)


def nandnet_dot(i_mapped, w_mapped, n: int) -> int:
    """Signed dot product of two length-``n`` vectors from their {0,1} forms.

    Computes 4*sum(I'W') - 2*sum(I') - 2*sum(W') + n, which equals the
    signed dot product of the un-mapped vectors (and has parity n mod 2).
    """
    iv = i_mapped.values if isinstance(i_mapped, MappedTensor) else MappedTensor(i_mapped).values
    wv = w_mapped.values if isinstance(w_mapped, MappedTensor) else MappedTensor(w_mapped).values
    if iv.ndim != 1 or wv.ndim != 1:
        raise ShapeError("nandnet_dot expects 1-D vectors")
    if len(iv) != n or len(wv) != n:
        raise ShapeError(f"nandnet_dot: lengths ({len(iv)}, {len(wv)}) != n={n}")
    iv = iv.astype(np.int64)
    wv = wv.astype(np.int64)
    and_sum = int(iv @ wv)
    return 4 * and_sum - 2 * int(iv.sum()) - 2 * int(wv.sum()) + n


@dataclass(frozen=True)
class TilePlan:
    """Partition of a weight matrix into n x m crossbar-sized sub-matrices.

    Padding cells (beyond the logical matrix) always store 0 and always see
    activation 0, so they are exact no-ops in the dot-product accounting.
    """

    n: int
    m: int
    row_tiles: int
    col_tiles: int
    pad_value: int = 0  # fixed: padding maps to stored-0 / gate-off

    def __post_init__(self):
        if self.n < 1 or self.m < 1 or self.row_tiles < 1 or self.col_tiles < 1:
            raise ShapeError("TilePlan: all dimensions must be >= 1")
        if self.pad_value != 0:
            raise DomainError("TilePlan: padding cells must store 0")

    @classmethod
    def for_matrix(cls, rows: int, cols: int, n: int, m: int) -> "TilePlan":
        if rows < 1 or cols < 1:
            raise ShapeError("TilePlan.for_matrix: empty matrix")
        return cls(n=n, m=m, row_tiles=-(-rows // n), col_tiles=-(-cols // m))

    def covers(self, rows: int, cols: int) -> bool:
        return self.n * self.row_tiles >= rows and self.m * self.col_tiles >= cols


@dataclass(frozen=True, eq=False)
class WeightTile:
    """One n x m mapped weight sub-matrix with per-column one-counts.

    ``n_logical``/``m_logical`` give the un-padded extent; rows/columns past
    them are padding and hold stored 0.  ``sum_wprime`` is precomputed per
    physical column (padding columns are 0 by construction).
    """

    mapped: MappedTensor          # (n, m) physical, padding already zeroed
    sum_wprime: np.ndarray        # (m,) int64
    n_logical: int
    m_logical: int
    row_start: int
    col_start: int

    @property
    def n(self) -> int:
        return self.mapped.shape[0]

    @property
    def m(self) -> int:
        return self.mapped.shape[1]


@dataclass(frozen=True, eq=False)
class TiledWeights:
    """Grid of :class:`WeightTile` covering one signed weight matrix."""

    plan: TilePlan
    rows: int
    cols: int
    tiles: tuple  # tuple of tuples, [row_tile][col_tile]

    def untile(self) -> BinaryTensor:
        """Reassemble the original signed matrix (padding removed)."""
        out = np.empty((self.rows, self.cols), dtype=np.int8)
        for tr in self.tiles:
            for t in tr:
                block = t.mapped.values[: t.n_logical, : t.m_logical]
                out[
                    t.row_start : t.row_start + t.n_logical,
                    t.col_start : t.col_start + t.m_logical,
                ] = 2 * block.astype(np.int8) - 1
        return BinaryTensor(out)


def tile_weights(w: BinaryTensor, plan: TilePlan) -> TiledWeights:
    """Split a signed weight matrix into mapped n x m tiles per ``plan``.

    Each tile carries its per-column one-count; padded cells store 0 and
    contribute nothing to any sum.  Raises ShapeError when the plan does
    not cover the matrix.
    """
    if not isinstance(w, BinaryTensor):
        w = BinaryTensor(w)
    if w.ndim != 2:
        raise ShapeError("tile_weights expects a 2-D weight matrix")
    rows, cols = w.shape
    if not plan.covers(rows, cols):
        raise ShapeError(
            f"TilePlan {plan.row_tiles}x{plan.col_tiles} of {plan.n}x{plan.m} "
            f"does not cover a {rows}x{cols} matrix"
        )
    mapped = to_mapped(w).values
    grid = []
    for tr in range(plan.row_tiles):
        r0 = tr * plan.n
        row = []
        for tc in range(plan.col_tiles):
            c0 = tc * plan.m
            nl = max(0, min(plan.n, rows - r0))
            ml = max(0, min(plan.m, cols - c0))
            block = np.zeros((plan.n, plan.m), dtype=np.int8)
            if nl and ml:
                block[:nl, :ml] = mapped[r0 : r0 + nl, c0 : c0 + ml]
            row.append(
                WeightTile(
                    mapped=MappedTensor(block),
                    sum_wprime=block.sum(axis=0, dtype=np.int64),
                    n_logical=nl,
                    m_logical=ml,
                    row_start=r0,
                    col_start=c0,
                )
            )
        grid.append(tuple(row))
    return TiledWeights(plan=plan, rows=rows, cols=cols, tiles=tuple(grid))


@dataclass(frozen=True)
class MultiBitPlan:
    """Bit-plane mapping for multi-bit profiling.

    Weights are stored as two's-complement bit planes (one binary cell per
    bit); non-negative activations are bit-streamed one bit per cycle.
    Used only for ideal partial-sum profiling; there is no circuit path.
    """

    weight_bits: int
    activation_bits: int

    def __post_init__(self):
        if self.weight_bits < 2:
            raise DomainError("MultiBitPlan: weight_bits must be >= 2")
        if self.activation_bits < 1:
            raise DomainError("MultiBitPlan: activation_bits must be >= 1")


def multibit_partial_sums(
    weights, activations, plan: MultiBitPlan, tile_n: int
) -> np.ndarray:
    """Ideal AND-plane partial sums for a multi-bit layer, per bit cycle.

    ``weights``: (R, C) integers within the two's-complement range of
    ``plan.weight_bits``.  ``activations``: (B, R) or (R,) non-negative
    integers below 2**activation_bits.  Weight bit j of logical column c
    occupies physical column c*weight_bits + j (LSB first); activation bit
    b is applied on cycle b.  Returns an int64 array of shape
    (B, row_tiles, activation_bits, C * weight_bits).  Rows are tiled in
    chunks of ``tile_n`` with zero padding.
    """
    w = _int_array(weights, "weights")
    a = _int_array(activations, "activations")
    if w.ndim != 2:
        raise ShapeError("multibit_partial_sums: weights must be 2-D")
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != w.shape[0]:
        raise ShapeError("multibit_partial_sums: activation length != weight rows")
    wb, ab = plan.weight_bits, plan.activation_bits
    lo, hi = -(1 << (wb - 1)), (1 << (wb - 1)) - 1
    if w.size and (w.min() < lo or w.max() > hi):
        raise DomainError(f"weights outside two's-complement range [{lo}, {hi}]")
    if a.size and (a.min() < 0 or a.max() >= (1 << ab)):
        raise DomainError(f"activations outside [0, {(1 << ab) - 1}]")

    R, C = w.shape
    B = a.shape[0]
    row_tiles = -(-R // tile_n)
    # two's-complement bit planes, LSB first
    wu = (w.astype(np.int64) & ((1 << wb) - 1)).astype(np.uint64)
    wbits = np.zeros((R, C * wb), dtype=np.int64)
    for j in range(wb):
        wbits[:, j::wb] = ((wu >> np.uint64(j)) & np.uint64(1)).astype(np.int64)
    abits = np.zeros((ab, B, R), dtype=np.int64)
    au = a.astype(np.uint64)
    for b in range(ab):
        abits[b] = ((au >> np.uint64(b)) & np.uint64(1)).astype(np.int64)

    out = np.zeros((B, row_tiles, ab, C * wb), dtype=np.int64)
    for t in range(row_tiles):
        rs = slice(t * tile_n, min((t + 1) * tile_n, R))
        wt = wbits[rs]  # (rows, C*wb)
        for b in range(ab):
            out[:, t, b, :] = abits[b][:, rs] @ wt
    return out
