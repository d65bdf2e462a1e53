"""Static weight and dynamic activation sparsification with exact sign repair.

A weight column is stored negated whenever its signed sum is >= 0, and an
activation sub-vector is applied negated whenever its one-count exceeds
n/2 (strictly).  Both transforms cap the number of 1s at about half the
rows, shrinking column currents.  One flip bit per column (kept in a
peripheral register) and one per activation vector record what happened;
the post-processing multiplies the corrected dot product by
(-1)^(activation_flip XOR column_flip), which restores the original signed
value exactly because sum(I*W) = sum((-I)*(-W)) = -sum((-I)*W).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .bnn import BinaryTensor, MappedTensor, WeightTile
from .errors import ConfigError, ConfigWarning, DomainError, ShapeError

__all__ = [
    "SparseXbarTile",
    "SparseActivation",
    "sparsify_weight_column",
    "sparsify_tile",
    "dense_tile",
    "sparsify_activation",
    "postprocess_column",
    "adc_bits_required",
]


@dataclass(frozen=True, eq=False)
class SparseXbarTile:
    """An n x m tile as deployed on the array, after per-column flips.

    ``mapped_weights`` holds the post-flip {0,1} cells (padding zeroed),
    ``column_flip[c]`` records whether stored column c is the complement of
    the original mapped column, and ``sum_wprime[c]`` is the post-flip
    one-count the post-processing consumes.  ``n`` is the logical (un-padded)
    row count; the residual "+n" term of the dot-product identity uses it.
    """

    mapped_weights: MappedTensor   # (n_phys, m_phys)
    column_flip: np.ndarray        # (m_phys,) uint8
    sum_wprime: np.ndarray         # (m_phys,) int64
    n: int                         # logical rows
    m_logical: int
    row_start: int = 0
    col_start: int = 0
    sparsified: bool = True        # False when wrapping an unmodified tile

    def __post_init__(self):
        w = self.mapped_weights.values
        if w.ndim != 2:
            raise ShapeError("SparseXbarTile: weights must be 2-D")
        if len(self.column_flip) != w.shape[1] or len(self.sum_wprime) != w.shape[1]:
            raise ShapeError("SparseXbarTile: per-column metadata length mismatch")
        recount = w.sum(axis=0, dtype=np.int64)
        if not np.array_equal(recount, self.sum_wprime):
            raise DomainError("SparseXbarTile: sum_wprime does not match stored cells")
        if self.sparsified:
            cap = (self.n + 1) // 2
            if self.m_logical and int(recount[: self.m_logical].max(initial=0)) > cap:
                raise DomainError(
                    f"SparseXbarTile: a column exceeds the {cap}-ones cap for n={self.n}"
                )

    @property
    def n_physical(self) -> int:
        return self.mapped_weights.shape[0]

    @property
    def m_physical(self) -> int:
        return self.mapped_weights.shape[1]


@dataclass(frozen=True, eq=False)
class SparseActivation:
    """A possibly-flipped activation sub-vector plus its bookkeeping.

    ``sum_i_report`` is the one-count forwarded to post-processing: the
    original count when not flipped, n - count when flipped (i.e. always
    the one-count of the vector actually applied to the wordlines).
    """

    mapped: MappedTensor        # (n,) post-flip
    activation_flip: int        # 0 or 1
    sum_i_report: int

    def __post_init__(self):
        if self.mapped.ndim != 1:
            raise ShapeError("SparseActivation: expected a 1-D vector")
        if self.activation_flip not in (0, 1):
            raise DomainError("SparseActivation: flip bit must be 0 or 1")
        if self.sum_i_report != int(self.mapped.values.sum()):
            raise DomainError("SparseActivation: sum_i_report mismatch")


def sparsify_weight_column(col: BinaryTensor) -> tuple[MappedTensor, int, int]:
    """Choose between storing a signed column or its negation.

    If the signed sum is >= 0 (ties included) the negated column is stored
    and the flip bit is 1; otherwise the column is stored as-is.  Returns
    (stored {0,1} column, flip bit, post-flip one-count); the stored column
    never has more than floor(n/2) ones.
    """
    if not isinstance(col, BinaryTensor):
        col = BinaryTensor(col)
    if col.ndim != 1:
        raise ShapeError("sparsify_weight_column expects a 1-D column")
    v = col.values.astype(np.int64)
    flip = 1 if int(v.sum()) >= 0 else 0
    stored = ((-v if flip else v) + 1) // 2
    return MappedTensor(stored), flip, int(stored.sum())


def sparsify_tile(tile: WeightTile) -> SparseXbarTile:
    """Apply static weight sparsification to every logical column of a tile.

    Padding rows stay 0 regardless of flips; padding columns are never
    flipped.  Flip decisions use only the logical rows.
    """
    w = tile.mapped.values.astype(np.int64)
    nl, ml = tile.n_logical, tile.m_logical
    stored = np.array(w, dtype=np.int8)
    flips = np.zeros(tile.m, dtype=np.uint8)
    if nl and ml:
        ones = w[:nl, :ml].sum(axis=0)
        # signed column sum = 2*ones - n_logical; flip when >= 0
        flip_cols = (2 * ones) >= nl
        flips[:ml] = flip_cols.astype(np.uint8)
        block = stored[:nl, :ml]
        stored[:nl, :ml] = np.where(flip_cols[None, :], 1 - block, block)
    return SparseXbarTile(
        mapped_weights=MappedTensor(stored),
        column_flip=flips,
        sum_wprime=stored.sum(axis=0, dtype=np.int64),
        n=nl,
        m_logical=ml,
        row_start=tile.row_start,
        col_start=tile.col_start,
    )


def dense_tile(tile: WeightTile) -> SparseXbarTile:
    """Wrap a tile unchanged (all flip bits 0) for sparsification-off runs."""
    return SparseXbarTile(
        mapped_weights=tile.mapped,
        column_flip=np.zeros(tile.m, dtype=np.uint8),
        sum_wprime=np.asarray(tile.sum_wprime, dtype=np.int64),
        n=tile.n_logical,
        m_logical=tile.m_logical,
        row_start=tile.row_start,
        col_start=tile.col_start,
        sparsified=False,
    )


def sparsify_activation(i_mapped: MappedTensor) -> SparseActivation:
    """Flip an activation vector iff its one-count exceeds n/2 (strict).

    At exactly n/2 ones the vector is left unchanged.  The reported count
    is that of the applied (post-flip) vector, i.e. n - count on a flip.
    """
    if not isinstance(i_mapped, MappedTensor):
        i_mapped = MappedTensor(i_mapped)
    if i_mapped.ndim != 1:
        raise ShapeError("sparsify_activation expects a 1-D vector")
    v = i_mapped.values
    n = len(v)
    s = int(v.sum())
    if 2 * s > n:
        return SparseActivation(MappedTensor(1 - v), 1, n - s)
    return SparseActivation(MappedTensor(v.copy()), 0, s)


def postprocess_column(
    raw_and_sum: int, act: SparseActivation, tile: SparseXbarTile, column: int
) -> int:
    """Recover the signed dot product from a digitized AND-plane sum.

    ``raw_and_sum`` is the (possibly non-ideal) digitized count for the
    stored column under the applied activation.  The corrected value
    4*raw - 2*sum_i_report - 2*sum_wprime[column] + n is negated when
    exactly one of the two flip bits is set.  With an ideal raw sum the
    result equals the original signed dot product exactly.
    """
    if not 0 <= column < tile.m_logical:
        raise IndexError(
            f"column {column} out of range for tile with {tile.m_logical} logical columns"
        )
    v = (
        4 * int(raw_and_sum)
        - 2 * act.sum_i_report
        - 2 * int(tile.sum_wprime[column])
        + tile.n
    )
    if act.activation_flip ^ int(tile.column_flip[column]):
        return -v
    return v


def adc_bits_required(n: int, binsparx_enabled: bool) -> int:
    """ADC bits needed for one column of an n-row array.

    log2(n) covers counts produced by n simultaneously asserted rows; with
    sparsification the one-count caps halve the range, allowing
    log2(n) - 1 bits.  ``n`` must be a power of two (rounding up silently
    is not permitted); tiny arrays where the reduced width reaches 0 bits
    trigger a ConfigWarning.
    """
    if n < 2 or (n & (n - 1)) != 0:
        raise ConfigError(f"adc_bits_required: n={n} is not a power of two >= 2")
    bits = n.bit_length() - 1
    if binsparx_enabled:
        bits -= 1
        if bits < 1:
            warnings.warn(
                f"n={n} yields a {bits}-bit ADC under sparsification",
                ConfigWarning,
                stacklevel=2,
            )
    return bits
