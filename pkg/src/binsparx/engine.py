"""End-to-end vector-matrix-multiply engine and desk-scale BNN inference.

The engine tiles a signed weight matrix onto n x m arrays, optionally
applies static column sparsification, and evaluates activations per tile:
dynamic activation flip, per-column electrical solve (or an exact ON-cell
count on the ideal path), optional dummy-column compensation, ADC
quantization, sign-corrected dot-product recovery, and exact integer
accumulation across row tiles.  Cross-tile accumulation is digital, so
only intra-column analog effects are non-ideal.

With non-idealities off and an ADC wide enough never to saturate, the
engine output is bit-exact against the plain signed VMM for every
sparsification setting - that equivalence is the contract everything else
here leans on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bnn import BinaryTensor, TilePlan, tile_weights
from .devices import DeviceModel, WireModel
from .errors import (
    BinsparxError,
    ConfigError,
    DomainError,
    FoldError,
    NonConvergenceError,
    ShapeError,
)
from .readout import AdcModel, DummyColumnConfig, dummy_compensate
from .solver import ColumnProblem, solve_column_dense, solve_columns_fast
from .sparsify import adc_bits_required, dense_tile, sparsify_tile

__all__ = [
    "EngineConfig",
    "Engine",
    "PreparedWeights",
    "LayerSpec",
    "FoldedThreshold",
    "RunStats",
    "InferenceResult",
    "fold_batchnorm",
    "im2col",
    "vmm",
    "infer",
]

# cap on elements per electrical batch; keeps memory modest on big runs
_MAX_BATCH_ELEMS = 4_000_000


@dataclass(frozen=True)
class EngineConfig:
    """Every knob of one run.  ``seed`` pins all stochastic choices."""

    n: int = 64
    m: int = 64
    binsparx: bool = True
    nonidealities: bool = True
    device: DeviceModel = field(default_factory=DeviceModel.sram8t)
    wire: WireModel = field(default_factory=lambda: WireModel.preset("M4"))
    adc_bits: int | str = "auto"      # "auto" (log2 n, minus 1 when sparsifying) | "full" | int
    adc_quantum: float | str = "auto"  # "auto" -> i_on
    adc_offset: float = 0.0
    adc_rounding: str = "half_even"
    dummy_enabled: bool | str = "auto"  # "auto" -> on for ReRAM
    dummy_domain: str = "analog"
    v_drive: float | str = "auto"       # "auto" -> device v_nominal
    solver: str = "fast"
    solver_tol: float = 1e-6
    solver_max_iter: int = 200
    solver_damping: float = 0.5
    topology: str = "opposite"
    seed: int = 0
    best_effort: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ConfigError("EngineConfig: tile geometry must be >= 1")
        if self.solver not in ("fast", "dense"):
            raise ConfigError(f"EngineConfig: solver must be fast|dense, got {self.solver!r}")
        if self.workers < 1:
            raise ConfigError("EngineConfig: workers must be >= 1")

    def resolved_adc(self) -> AdcModel:
        if self.adc_bits == "auto":
            bits = adc_bits_required(self.n, self.binsparx)
        elif self.adc_bits == "full":
            bits = int(self.n).bit_length()  # ceil(log2(n+1)): never saturates
        elif isinstance(self.adc_bits, int):
            bits = self.adc_bits
        else:
            raise ConfigError(f"EngineConfig: bad adc_bits {self.adc_bits!r}")
        if self.adc_quantum == "auto":
            # dummy compensation subtracts i_hrs for every asserted row, so
            # one compensated ON cell is worth i_on - i_hrs, not i_on
            if self.resolved_dummy().enabled:
                quantum = self.device.i_on - self.device.i_hrs
            else:
                quantum = self.device.i_on
        else:
            quantum = float(self.adc_quantum)
        return AdcModel(bits=bits, quantum=quantum, offset=self.adc_offset,
                        rounding=self.adc_rounding)

    def resolved_dummy(self) -> DummyColumnConfig:
        if self.dummy_enabled == "auto":
            enabled = self.device.kind == "reram1t1r"
        else:
            enabled = bool(self.dummy_enabled)
        return DummyColumnConfig(enabled=enabled, domain=self.dummy_domain)

    def resolved_v_drive(self) -> float:
        return self.device.v_nominal if self.v_drive == "auto" else float(self.v_drive)


@dataclass(frozen=True, eq=False)
class PreparedWeights:
    """A weight matrix tiled (and possibly column-sparsified) for the engine."""

    rows: int
    cols: int
    plan: TilePlan
    tiles: tuple  # [row_tile][col_tile] of SparseXbarTile
    binsparx: bool


class RunStats:
    """Mutable per-run aggregates: ideal-sum histograms, deviations, events."""

    def __init__(self, hist_bins: int):
        self.hist_bins = hist_bins
        self.layer_hist: dict[str, np.ndarray] = {}
        self.layer_absdev_sum: dict[str, float] = {}
        self.layer_dev_count: dict[str, int] = {}
        self.clamp_events = 0
        self.nonconverged = 0

    def add_ideal(self, layer: str, counts: np.ndarray):
        h = self.layer_hist.get(layer)
        if h is None:
            h = np.zeros(self.hist_bins + 1, dtype=np.int64)
            self.layer_hist[layer] = h
        h += np.bincount(counts.ravel(), minlength=self.hist_bins + 1)

    def add_deviation(self, layer: str, absdev: np.ndarray):
        self.layer_absdev_sum[layer] = self.layer_absdev_sum.get(layer, 0.0) + float(
            absdev.sum()
        )
        self.layer_dev_count[layer] = self.layer_dev_count.get(layer, 0) + absdev.size

    def mean_abs_deviation(self, layer: str | None = None) -> float:
        if layer is not None:
            c = self.layer_dev_count.get(layer, 0)
            return self.layer_absdev_sum.get(layer, 0.0) / c if c else 0.0
        total = sum(self.layer_absdev_sum.values())
        count = sum(self.layer_dev_count.values())
        return total / count if count else 0.0

    def to_dict(self) -> dict:
        return {
            "clamp_events": self.clamp_events,
            "nonconverged_columns": self.nonconverged,
            "layers": {
                name: {
                    "histogram": hist.tolist(),
                    "samples": int(hist.sum()),
                    "mean_ideal_sum": (
                        float((hist * np.arange(len(hist))).sum() / hist.sum())
                        if hist.sum()
                        else 0.0
                    ),
                    "mean_abs_deviation": self.mean_abs_deviation(name),
                }
                for name, hist in sorted(self.layer_hist.items())
            },
        }


class Engine:
    """Immutable orchestrator; every public call is side-effect free."""

    def __init__(self, config: EngineConfig):
        self.config = config
        self.adc = config.resolved_adc()
        self.dummy = config.resolved_dummy()
        self.v_drive = config.resolved_v_drive()

    # -- weight preparation ------------------------------------------------

    def prepare(self, w) -> PreparedWeights:
        """Tile a signed weight matrix; sparsify columns when enabled."""
        if not isinstance(w, BinaryTensor):
            w = BinaryTensor(w)
        if w.ndim != 2:
            raise ShapeError("prepare expects a 2-D weight matrix")
        rows, cols = w.shape
        plan = TilePlan.for_matrix(rows, cols, self.config.n, self.config.m)
        tiled = tile_weights(w, plan)
        conv = sparsify_tile if self.config.binsparx else dense_tile
        grid = tuple(tuple(conv(t) for t in tr) for tr in tiled.tiles)
        return PreparedWeights(
            rows=rows, cols=cols, plan=plan, tiles=grid, binsparx=self.config.binsparx
        )

    # -- electrical helpers --------------------------------------------------

    def solve_columns(self, stored: np.ndarray, gates: np.ndarray):
        """Solve stored/gate bit arrays (broadcast to (B, n)) per config.

        Returns (i_out (B,), converged (B,) bool).
        """
        cfg = self.config
        if cfg.solver == "dense":
            stored2 = np.atleast_2d(stored)
            gates2 = np.atleast_2d(gates)
            stored2, gates2 = np.broadcast_arrays(stored2, gates2)
            outs = np.empty(len(stored2))
            conv = np.empty(len(stored2), dtype=bool)
            for b in range(len(stored2)):
                p = ColumnProblem(
                    stored2.shape[1], stored2[b], gates2[b], cfg.device, cfg.wire,
                    self.v_drive, cfg.topology,
                )
                r = solve_column_dense(p, tol=cfg.solver_tol, max_iter=cfg.solver_max_iter)
                outs[b], conv[b] = r.i_out, r.converged
            return outs, conv
        res = solve_columns_fast(
            stored, gates, cfg.device, cfg.wire, self.v_drive, cfg.topology,
            tol=cfg.solver_tol, max_iter=cfg.solver_max_iter, damping=cfg.solver_damping,
        )
        return res.i_out, res.converged

    def _digitize_tile(
        self,
        stored: np.ndarray,     # (n_phys, m_phys) int8
        gates: np.ndarray,      # (B, n_phys) int8, post-flip, padding zeroed
        ml: int,
        stats: RunStats | None,
        layer: str,
    ) -> np.ndarray:
        """Solve + compensate + quantize one tile for B inputs -> (B, ml) levels."""
        B = gates.shape[0]
        n_phys, m_phys = stored.shape
        levels = np.empty((B, ml), dtype=np.int64)
        stored_cols = np.ascontiguousarray(stored[:, :ml].T)  # (ml, n)
        chunk = max(1, _MAX_BATCH_ELEMS // max(1, ml * n_phys))
        nonconv = 0
        clamps = 0
        for b0 in range(0, B, chunk):
            b1 = min(B, b0 + chunk)
            nb = b1 - b0
            stored_rep = np.broadcast_to(stored_cols, (nb, ml, n_phys)).reshape(-1, n_phys)
            gates_rep = np.repeat(gates[b0:b1], ml, axis=0)
            i_out, conv = self.solve_columns(stored_rep, gates_rep)
            nonconv += int((~conv).sum())
            i_out = i_out.reshape(nb, ml)
            if self.dummy.enabled:
                i_dummy, dconv = self.solve_columns(
                    np.zeros((nb, n_phys), dtype=np.int8), gates[b0:b1]
                )
                nonconv += int((~dconv).sum())
                if self.dummy.domain == "analog":
                    i_out = dummy_compensate(i_out, i_dummy[:, None])
                    lv, c = self.adc.quantize_array(i_out)
                else:
                    lv_data, c1 = self.adc.quantize_array(i_out)
                    lv_dummy, c2 = self.adc.quantize_array(i_dummy)
                    lv = np.maximum(0, lv_data - lv_dummy[:, None])
                    c = c1 + c2
            else:
                lv, c = self.adc.quantize_array(i_out)
            clamps += c
            levels[b0:b1] = lv
        if nonconv:
            if stats is not None:
                stats.nonconverged += nonconv
            if not self.config.best_effort:
                raise NonConvergenceError(
                    f"{nonconv} column solve(s) did not converge in layer {layer!r}"
                )
        if stats is not None:
            stats.clamp_events += clamps
        return levels

    # -- the VMM -------------------------------------------------------------

    def vmm_batch(
        self,
        prepared: PreparedWeights,
        activations: np.ndarray,
        stats: RunStats | None = None,
        layer: str = "vmm",
    ) -> np.ndarray:
        """Signed VMM of (B, rows) activation rows against a prepared matrix."""
        acts = np.atleast_2d(np.asarray(activations))
        if acts.shape[1] != prepared.rows:
            raise ShapeError(
                f"activation length {acts.shape[1]} != weight rows {prepared.rows}"
            )
        if acts.size and not np.isin(acts, (-1, 1)).all():
            raise DomainError("activations must be in {-1,+1}")
        cfg = self.config
        B = acts.shape[0]
        out = np.zeros((B, prepared.cols), dtype=np.int64)
        mapped_full = ((acts.astype(np.int16) + 1) // 2).astype(np.int8)

        for tile_row in prepared.tiles:
            nl = tile_row[0].n
            if nl == 0:
                continue
            r0 = tile_row[0].row_start
            sub = mapped_full[:, r0 : r0 + nl].astype(np.int64)  # (B, nl)
            s = sub.sum(axis=1)
            if prepared.binsparx:
                aflip = (2 * s) > nl
                applied = np.where(aflip[:, None], 1 - sub, sub)
                report = np.where(aflip, nl - s, s)
            else:
                aflip = np.zeros(B, dtype=bool)
                applied = sub
                report = s
            n_phys = tile_row[0].n_physical
            gates = np.zeros((B, n_phys), dtype=np.int8)
            gates[:, :nl] = applied

            for tile in tile_row:
                ml = tile.m_logical
                if ml == 0:
                    continue
                stored = tile.mapped_weights.values
                ideal = gates.astype(np.int64) @ stored.astype(np.int64)  # (B, m_phys)
                if prepared.binsparx:
                    cap = (nl + 1) // 2
                    if ideal[:, :ml].size and int(ideal[:, :ml].max()) > cap:
                        raise BinsparxError(
                            f"internal: ideal column sum exceeds the {cap} cap"
                        )
                if stats is not None:
                    stats.add_ideal(layer, ideal[:, :ml])
                if cfg.nonidealities:
                    raw = self._digitize_tile(stored, gates, ml, stats, layer)
                    if stats is not None:
                        stats.add_deviation(layer, np.abs(raw - ideal[:, :ml]))
                else:
                    # parasitic-free: the ADC sees exactly "count" quanta, so
                    # digitization reduces to integer saturation
                    raw = np.minimum(ideal[:, :ml], self.adc.levels - 1)
                    if stats is not None:
                        stats.clamp_events += int((ideal[:, :ml] > self.adc.levels - 1).sum())
                        stats.add_deviation(layer, np.abs(raw - ideal[:, :ml]))
                v = (
                    4 * raw
                    - 2 * report[:, None]
                    - 2 * tile.sum_wprime[None, :ml]
                    + nl
                )
                flips = aflip[:, None] ^ (tile.column_flip[None, :ml] > 0)
                out[:, tile.col_start : tile.col_start + ml] += np.where(flips, -v, v)
        return out

    def vmm(
        self,
        prepared: PreparedWeights,
        activations,
        stats: RunStats | None = None,
    ) -> np.ndarray:
        """Single activation row -> per-output-column signed integers."""
        if isinstance(activations, BinaryTensor):
            activations = activations.values
        a = np.asarray(activations)
        if a.ndim != 1:
            raise ShapeError("vmm expects a 1-D activation vector")
        return self.vmm_batch(prepared, a[None, :], stats=stats)[0]

    # -- inference -----------------------------------------------------------

    def infer(
        self,
        layers: Sequence["LayerSpec"],
        features: np.ndarray,
        labels: np.ndarray | None = None,
        binarize_threshold: float = 0.0,
        stats: RunStats | None = None,
    ) -> "InferenceResult":
        """Run a small BNN on (B, D) features; deterministic given config."""
        if stats is None:
            stats = RunStats(self.config.n)
        feats = np.asarray(features, dtype=np.float64)
        if feats.ndim != 2:
            raise ShapeError("features must be a 2-D (inputs, dims) array")
        x = np.where(feats > binarize_threshold, 1, -1).astype(np.int8)
        spatial = None  # (C, H, W) tracking for conv layers

        prepared_cache: dict[int, PreparedWeights] = {}

        def as_prepared(layer: LayerSpec, w2d: np.ndarray) -> PreparedWeights:
            key = id(layer)
            if key not in prepared_cache:
                prepared_cache[key] = self.prepare(w2d)
            return prepared_cache[key]

        for layer in layers:
            if layer.kind == "dense":
                w = layer.weights.values
                if x.ndim != 2:
                    x = x.reshape(x.shape[0], -1)
                if x.shape[1] != w.shape[0]:
                    raise ShapeError(
                        f"layer {layer.name!r}: input width {x.shape[1]} != rows {w.shape[0]}"
                    )
                if layer.full_precision:
                    x = x.astype(np.int64) @ w.astype(np.int64)
                else:
                    x = self.vmm_batch(as_prepared(layer, w), x, stats, layer.name)
                spatial = None
            elif layer.kind == "conv":
                cout, cin, kh, kw = layer.weights.shape
                if spatial is None:
                    if layer.in_shape is None:
                        raise ShapeError(f"layer {layer.name!r}: in_shape required")
                    spatial = tuple(layer.in_shape)
                C, H, W = spatial
                if C != cin:
                    raise ShapeError(f"layer {layer.name!r}: channel mismatch")
                imgs = x.reshape(x.shape[0], C, H, W)
                cols, oh, ow = im2col(imgs, kh, kw, layer.stride, layer.padding)
                wflat = layer.weights.values.reshape(cout, -1).T  # (cin*kh*kw, cout)
                B, P, D = cols.shape
                flat = cols.reshape(B * P, D)
                if layer.full_precision:
                    y = flat.astype(np.int64) @ wflat.astype(np.int64)
                else:
                    y = self.vmm_batch(as_prepared(layer, wflat), flat, stats, layer.name)
                x = y.reshape(B, P, cout).transpose(0, 2, 1).reshape(B, cout, oh, ow)
                spatial = (cout, oh, ow)
            elif layer.kind == "sign":
                x = np.where(x >= 0, 1, -1).astype(np.int8)
            elif layer.kind == "threshold":
                axis = 1 if x.ndim == 4 else -1
                x = layer.thresholds.apply(x, channel_axis=axis)
            else:
                raise ConfigError(f"unknown layer kind {layer.kind!r}")

        scores = x.reshape(x.shape[0], -1)
        predictions = np.argmax(scores, axis=1)
        accuracy = None
        if labels is not None:
            labels = np.asarray(labels)
            accuracy = float((predictions == labels).mean())
        return InferenceResult(
            predictions=predictions, scores=scores, accuracy=accuracy, stats=stats
        )


@dataclass(frozen=True, eq=False)
class FoldedThreshold:
    """Batch-norm folded to integer thresholds on partial-sum scores.

    For channel c the activation is +1 iff the batch-normed score is >= 0:
    x >= T when gamma > 0, x <= T when gamma < 0.
    """

    thresholds: np.ndarray  # (C,) int64
    gamma_sign: np.ndarray  # (C,) int8, +1 or -1

    def apply(self, x: np.ndarray, channel_axis: int = -1) -> np.ndarray:
        shape = [1] * x.ndim
        shape[channel_axis] = len(self.thresholds)
        t = self.thresholds.reshape(shape)
        s = self.gamma_sign.reshape(shape)
        pos = np.where(x >= t, 1, -1)
        neg = np.where(x <= t, 1, -1)
        return np.where(s > 0, pos, neg).astype(np.int8)


def fold_batchnorm(gamma, beta, mean, var, eps: float = 1e-5) -> FoldedThreshold:
    """Fold y = gamma*(x-mean)/sqrt(var+eps) + beta followed by sign().

    sign(y) = sign(gamma) * sign(x - t) with t = mean - beta*sqrt(var+eps)/gamma;
    thresholds are stored as integers (ceil/floor per gamma's sign) so the
    comparison is exact on integer partial sums.
    """
    g = np.asarray(gamma, dtype=np.float64)
    b = np.asarray(beta, dtype=np.float64)
    mu = np.asarray(mean, dtype=np.float64)
    v = np.asarray(var, dtype=np.float64)
    if np.any(v + eps <= 0):
        raise FoldError("fold_batchnorm: var + eps must be > 0")
    if np.any(g == 0):
        raise FoldError("fold_batchnorm: gamma must be nonzero")
    t = mu - b * np.sqrt(v + eps) / g
    thr = np.where(g > 0, np.ceil(t), np.floor(t)).astype(np.int64)
    return FoldedThreshold(thresholds=thr, gamma_sign=np.where(g > 0, 1, -1).astype(np.int8))


@dataclass(frozen=True, eq=False)
class LayerSpec:
    """One layer of a desk-scale BNN."""

    name: str
    kind: str  # dense | conv | sign | threshold
    weights: BinaryTensor | None = None
    thresholds: FoldedThreshold | None = None
    stride: int = 1
    padding: int = 0
    in_shape: tuple | None = None  # (C, H, W) for the first conv layer
    full_precision: bool = False

    def __post_init__(self):
        if self.kind in ("dense", "conv") and self.weights is None:
            raise ConfigError(f"layer {self.name!r}: weights required")
        if self.kind == "dense" and self.weights.ndim != 2:
            raise ShapeError(f"layer {self.name!r}: dense weights must be 2-D")
        if self.kind == "conv" and self.weights.ndim != 4:
            raise ShapeError(f"layer {self.name!r}: conv weights must be 4-D")
        if self.kind == "threshold" and self.thresholds is None:
            raise ConfigError(f"layer {self.name!r}: thresholds required")
        if self.kind == "conv" and (self.stride < 1 or self.padding < 0):
            raise ConfigError(f"layer {self.name!r}: bad stride/padding")


@dataclass(frozen=True, eq=False)
class InferenceResult:
    predictions: np.ndarray
    scores: np.ndarray
    accuracy: float | None
    stats: RunStats


def im2col(
    imgs: np.ndarray, kh: int, kw: int, stride: int = 1, padding: int = 0
) -> tuple[np.ndarray, int, int]:
    """Lower (B, C, H, W) signed images to patch rows for dense VMM.

    Padding cells are filled with -1 (zero applied voltage in hardware).
    Returns (cols (B, OH*OW, C*kh*kw), OH, OW); patch element order is
    (channel, kernel row, kernel col), matching a (cout, cin, kh, kw)
    kernel flattened C-order.
    """
    B, C, H, W = imgs.shape
    if padding:
        imgs = np.pad(
            imgs,
            ((0, 0), (0, 0), (padding, padding), (padding, padding)),
            constant_values=-1,
        )
    Hp, Wp = imgs.shape[2], imgs.shape[3]
    if kh > Hp or kw > Wp:
        raise ShapeError("kernel larger than padded input")
    win = np.lib.stride_tricks.sliding_window_view(imgs, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]
    oh, ow = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B, oh * ow, C * kh * kw)
    return np.ascontiguousarray(cols), oh, ow


def vmm(engine: Engine, prepared: PreparedWeights, activations) -> np.ndarray:
    """Functional form of :meth:`Engine.vmm`."""
    return engine.vmm(prepared, activations)


def infer(
    engine: Engine,
    layers: Sequence[LayerSpec],
    features: np.ndarray,
    labels: np.ndarray | None = None,
    **kw,
) -> InferenceResult:
    """Functional form of :meth:`Engine.infer`."""
    return engine.infer(layers, features, labels, **kw)
