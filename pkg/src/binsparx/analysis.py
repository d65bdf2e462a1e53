"""Measurement harnesses: ideal partial-sum profiling, deviation sweeps,
sparsification statistics, and a bookkeeping cost ledger.

These reproduce, at desk scale, the measurements a hardware evaluation
would make: histograms of ideal per-column AND sums, the growth of the
output-current deviation with the number of ON cells, the partial-sum
reduction delivered by sparsification, and the digital bookkeeping cost
(ADC bits, adder/comparator/flip-gate counts - counts only, no joules).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .bnn import TilePlan
from .devices import DeviceModel, WireModel
from .engine import Engine, RunStats
from .errors import ConfigError, DomainError
from .readout import dummy_compensate
from .solver import (
    ColumnProblem,
    solve_column_dense,
    solve_column_fast,
    solve_column_linear_ladder,
)
from .sparsify import adc_bits_required

__all__ = [
    "PartialSumHistogram",
    "DeviationSweep",
    "profile_partial_sums",
    "profile_columns",
    "sweep_deviation",
    "cost_report",
    "solver_validation_suite",
]


@dataclass(frozen=True, eq=False)
class PartialSumHistogram:
    """Counts of ideal per-column AND sums, indexed 0..n."""

    counts: np.ndarray
    per_layer: dict

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def mean(self) -> float:
        if self.total == 0:
            return 0.0
        return float((self.counts * np.arange(len(self.counts))).sum() / self.total)

    def reduction_vs(self, baseline: "PartialSumHistogram") -> float:
        """1 - mean/baseline_mean: the fraction shaved off the average sum."""
        if baseline.mean == 0:
            raise DomainError("baseline histogram has zero mean")
        return 1.0 - self.mean / baseline.mean


def _ideal_engine(engine: Engine, binsparx: bool) -> Engine:
    if engine.config.nonidealities:
        raise ConfigError("profiling requires an ideal engine (nonidealities off)")
    if engine.config.binsparx == binsparx:
        return engine
    return Engine(replace(engine.config, binsparx=binsparx))


def _hist_from_stats(stats: RunStats) -> PartialSumHistogram:
    bins = stats.hist_bins + 1
    total = np.zeros(bins, dtype=np.int64)
    per_layer = {}
    for name, h in sorted(stats.layer_hist.items()):
        total += h
        per_layer[name] = h.copy()
    return PartialSumHistogram(counts=total, per_layer=per_layer)


def profile_partial_sums(
    engine: Engine,
    layers,
    features: np.ndarray,
    binsparx: bool,
) -> PartialSumHistogram:
    """Histogram the ideal AND sum of every (tile, column, input) triple
    produced while running a model on a dataset.

    ``engine`` must have non-idealities disabled; its sparsification flag
    is overridden by ``binsparx`` so paired on/off profiles share
    everything else.
    """
    eng = _ideal_engine(engine, binsparx)
    stats = RunStats(eng.config.n)
    eng.infer(layers, features, stats=stats)
    return _hist_from_stats(stats)


def profile_columns(
    engine: Engine,
    weights,
    activations: np.ndarray,
    binsparx: bool,
) -> PartialSumHistogram:
    """Histogram ideal AND sums for one weight matrix and a stack of
    signed activation rows (synthetic-workload profiling)."""
    eng = _ideal_engine(engine, binsparx)
    stats = RunStats(eng.config.n)
    prepared = eng.prepare(weights)
    eng.vmm_batch(prepared, activations, stats=stats)
    return _hist_from_stats(stats)


@dataclass(frozen=True, eq=False)
class DeviationSweep:
    """Per ON-count x: normalized deviation (ideal - measured)/quantum.

    ``mean``/``mn``/``mx``/``mean_abs`` are over converged trials only;
    non-convergent columns are tallied in ``nonconverged``.
    """

    x_values: np.ndarray
    samples: np.ndarray
    mean: np.ndarray
    mn: np.ndarray
    mx: np.ndarray
    mean_abs: np.ndarray
    nonconverged: np.ndarray

    def rows(self):
        for i, x in enumerate(self.x_values):
            yield (
                int(x),
                float(self.mean[i]),
                float(self.mn[i]),
                float(self.mx[i]),
                float(self.mean_abs[i]),
                int(self.samples[i]),
                int(self.nonconverged[i]),
            )


def sweep_deviation(
    engine: Engine,
    x_values,
    trials_per_x: int,
    rng: np.random.Generator | None = None,
) -> DeviationSweep:
    """Sample columns with exactly ``x`` coincident ON cells and measure the
    output-current deviation from the x*i_on ideal, in ADC quanta.

    Placements are uniform over all (stored, gate) pairs with exactly x
    rows where both are 1: the remaining rows draw uniformly from the
    three non-ON combinations.  Dummy compensation applies when the
    engine has it enabled.
    """
    if trials_per_x < 1:
        raise DomainError("trials_per_x must be >= 1")
    n = engine.config.n
    xs = np.asarray(list(x_values), dtype=np.int64)
    if xs.size and (xs.min() < 0 or xs.max() > n):
        raise DomainError(f"x values must lie in [0, {n}]")
    if rng is None:
        rng = np.random.default_rng(engine.config.seed)
    # one ADC quantum per ON cell; with dummy compensation enabled the
    # quantum already accounts for the subtracted per-row HRS share
    quantum = engine.adc.quantum

    means = np.empty(len(xs))
    mns = np.empty(len(xs))
    mxs = np.empty(len(xs))
    mabs = np.empty(len(xs))
    samples = np.zeros(len(xs), dtype=np.int64)
    noncvg = np.zeros(len(xs), dtype=np.int64)

    for i, x in enumerate(xs):
        # first x slots of a random permutation hold the coincident ONs
        order = np.argsort(rng.random((trials_per_x, n)), axis=1)
        on = order < x
        combo = rng.integers(0, 3, size=(trials_per_x, n))
        stored = np.where(on, 1, np.where(combo == 2, 1, 0)).astype(np.int8)
        gates = np.where(on, 1, np.where(combo == 1, 1, 0)).astype(np.int8)
        i_out, conv = engine.solve_columns(stored, gates)
        if engine.dummy.enabled:
            i_dummy, dconv = engine.solve_columns(np.zeros_like(stored), gates)
            conv = conv & dconv
            i_out = dummy_compensate(i_out, i_dummy)
        dev = (x * quantum - i_out) / quantum
        ok = conv
        noncvg[i] = int((~ok).sum())
        good = dev[ok]
        samples[i] = good.size
        if good.size:
            means[i] = good.mean()
            mns[i] = good.min()
            mxs[i] = good.max()
            mabs[i] = np.abs(good).mean()
        else:
            means[i] = mns[i] = mxs[i] = mabs[i] = np.nan
    return DeviationSweep(
        x_values=xs, samples=samples, mean=means, mn=mns, mx=mxs,
        mean_abs=mabs, nonconverged=noncvg,
    )


def cost_report(engine: Engine, rows: int | None = None, cols: int | None = None) -> dict:
    """Digital bookkeeping cost of one VMM on a rows x cols matrix.

    Counts only: adder-tree additions, comparators, XOR flip gates,
    subtractor uses, output negations, and flip-register bits.  ADC widths
    are reported for both operating modes when the tile rows are a power
    of two.
    """
    cfg = engine.config
    n, m = cfg.n, cfg.m
    rows = n if rows is None else rows
    cols = m if cols is None else cols
    plan = TilePlan.for_matrix(rows, cols, n, m)
    rt, ct = plan.row_tiles, plan.col_tiles
    tiles = rt * ct
    bsx = cfg.binsparx

    if n >= 2 and (n & (n - 1)) == 0:
        bits_base = adc_bits_required(n, False)
        bits_bsx = bits_base - 1
    else:
        bits_base = bits_bsx = None

    return {
        "array": {"n": n, "m": m, "rows": rows, "cols": cols,
                  "row_tiles": rt, "col_tiles": ct, "tiles": tiles},
        "adc_bits": {"baseline": bits_base, "binsparx": bits_bsx,
                     "in_use": engine.adc.bits},
        "per_vmm": {
            # the activation-sum adder trees exist in both modes (the
            # post-processing needs sum(I') regardless)
            "activation_adder_tree_adds": rt * (n - 1),
            "cross_tile_accumulate_adds": cols * (rt - 1),
            "postprocess_adds": 3 * rt * cols,
            "comparators": rt if bsx else 0,
            "activation_xor_gates": rt * n if bsx else 0,
            "sum_subtractor_uses": rt if bsx else 0,
            "output_negations": rt * cols if bsx else 0,
        },
        "registers": {
            "column_flip_bits_per_tile": m if bsx else 0,
            "column_flip_bits_total": tiles * m if bsx else 0,
        },
        "binsparx": bsx,
    }


def solver_validation_suite(
    trials: int,
    seed: int,
    n: int = 64,
    device_kind: str = "sram8t",
    v_nominal: float = 0.7,
    budget: float = 0.005,
    presets=("M3", "M4", "M6"),
    on_currents=(1e-6, 2e-6),
    solver_tol: float = 1e-9,
) -> dict:
    """Fast-vs-dense agreement on random columns, per wire/current corner.

    Also runs two anchored checks: a zero-parasitic column must hit
    k * i_on exactly, and a linear-device column must match the
    closed-form ladder solution to 1e-9 relative.  Returns a dict with
    per-corner max/mean relative error and an overall ``passed`` flag.
    """
    rng = np.random.default_rng(seed)
    corners = []
    worst = 0.0
    for preset in presets:
        for i_on in on_currents:
            if device_kind == "reram1t1r":
                device = DeviceModel.reram1t1r(i_on=i_on, v_nominal=v_nominal,
                                               v_knee=v_nominal / 2)
            else:
                device = DeviceModel.sram8t(i_on=i_on, v_nominal=v_nominal,
                                            v_knee=v_nominal / 2)
            wire = WireModel.preset(preset)
            errs = np.empty(trials)
            for t in range(trials):
                stored = rng.integers(0, 2, n)
                gates = rng.integers(0, 2, n)
                p = ColumnProblem(n, stored, gates, device, wire, v_nominal)
                a = solve_column_fast(p, tol=solver_tol, max_iter=2000)
                b = solve_column_dense(p, tol=solver_tol)
                ref = max(abs(b.i_out), device.i_off * n, 1e-15)
                errs[t] = abs(a.i_out - b.i_out) / ref
            corner = {
                "preset": preset,
                "i_on": i_on,
                "max_rel_error": float(errs.max()),
                "mean_rel_error": float(errs.mean()),
                "trials": trials,
            }
            worst = max(worst, corner["max_rel_error"])
            corners.append(corner)

    # anchored check 1: no parasitics -> exactly k ON currents
    device0 = DeviceModel(kind=device_kind, i_on=1e-6, i_hrs=0.0, i_off=0.0,
                          v_nominal=v_nominal, v_knee=v_nominal / 2)
    wire0 = WireModel(0.0, 0.0, 0.0, 0.0)
    stored = rng.integers(0, 2, n)
    gates = rng.integers(0, 2, n)
    k = int(((stored > 0) & (gates > 0)).sum())
    p0 = ColumnProblem(n, stored, gates, device0, wire0, v_nominal)
    zero_err = 0.0
    for res in (solve_column_fast(p0, tol=1e-12), solve_column_dense(p0, tol=1e-12)):
        if k:
            zero_err = max(zero_err, abs(res.i_out - k * 1e-6) / (k * 1e-6))
        else:
            zero_err = max(zero_err, abs(res.i_out))

    # anchored check 2: ohmic cells vs the closed-form ladder
    dev_lin = DeviceModel(kind=device_kind, i_on=1e-6, i_hrs=0.0, i_off=0.0,
                          v_nominal=v_nominal, v_knee=v_nominal / 2, curve="linear")
    wire_lin = WireModel.preset("M3")
    stored = rng.integers(0, 2, n)
    gates = rng.integers(0, 2, n)
    g = np.where((stored > 0) & (gates > 0), dev_lin.i_on / v_nominal, 0.0)
    i_cf, _, _, _ = solve_column_linear_ladder(g, wire_lin, v_nominal)
    p_lin = ColumnProblem(n, stored, gates, dev_lin, wire_lin, v_nominal)
    dense_lin = solve_column_dense(p_lin, tol=1e-12)
    linear_err = abs(dense_lin.i_out - i_cf) / abs(i_cf)

    passed = worst <= budget and zero_err <= 1e-9 and linear_err <= 1e-9
    return {
        "corners": corners,
        "max_rel_error": worst,
        "budget": budget,
        "zero_parasitic_rel_error": float(zero_err),
        "linear_closed_form_rel_error": float(linear_err),
        "passed": bool(passed),
    }
