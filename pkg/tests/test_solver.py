import numpy as np
import pytest

from binsparx.devices import DeviceModel, WireModel
from binsparx.errors import DomainError, ShapeError
from binsparx.solver import (
    ColumnProblem,
    ideal_column_current,
    solve_column_dense,
    solve_column_fast,
    solve_column_linear_ladder,
    solve_columns_fast,
)

from conftest import nodal_reference_linear

V = 0.7


def _problem(stored, gates, device=None, wire=None, topology="opposite"):
    stored = np.asarray(stored)
    return ColumnProblem(
        n=len(stored),
        stored_bits=stored,
        gate_bits=np.asarray(gates),
        device=device or DeviceModel.sram8t(),
        wire=wire or WireModel.preset("M3"),
        v_drive=V,
        topology=topology,
    )


def _clean_device(**kw):
    return DeviceModel(kind="sram8t", i_on=1e-6, i_hrs=0.0, i_off=0.0, **kw)


class TestDegenerate:
    def test_zero_parasitics_exact(self, rng):
        dev = _clean_device()
        wire = WireModel(0.0, 0.0, 0.0, 0.0)
        stored = rng.integers(0, 2, 64)
        gates = rng.integers(0, 2, 64)
        k = int(((stored > 0) & (gates > 0)).sum())
        p = _problem(stored, gates, dev, wire)
        for res in (solve_column_fast(p), solve_column_dense(p)):
            assert res.converged
            assert res.i_out == pytest.approx(k * 1e-6, rel=1e-12)
            assert res.i_out == pytest.approx(ideal_column_current(p), rel=1e-12)

    def test_all_gates_off(self):
        dev = DeviceModel.sram8t()
        p = _problem(np.ones(16, int), np.zeros(16, int), dev, WireModel.preset("M4"))
        res = solve_column_fast(p)
        assert res.i_out == pytest.approx(16 * dev.i_off, rel=1e-9)

    def test_ideal_current_examples(self):
        stored = np.zeros(64, int)
        stored[:19] = 1
        p = _problem(stored, stored)
        assert ideal_column_current(p) == pytest.approx(19e-6)
        p0 = _problem(np.zeros(64, int), np.ones(64, int))
        assert ideal_column_current(p0) == 0.0


class TestFastVsDense:
    def test_small_worked_case(self):
        wire = WireModel(20.0, 20.0, 1000.0, 1000.0)
        stored = np.array([1, 1, 1, 0])
        gates = np.array([1, 1, 1, 1])
        p = _problem(stored, gates, DeviceModel.sram8t(), wire)
        a = solve_column_fast(p, tol=1e-9)
        b = solve_column_dense(p, tol=1e-9)
        assert a.converged and b.converged
        assert abs(a.i_out - b.i_out) / b.i_out < 1e-3

    @pytest.mark.parametrize("preset", ["M3", "M4", "M6"])
    @pytest.mark.parametrize("i_on", [1e-6, 2e-6])
    def test_random_columns(self, rng, preset, i_on):
        dev = DeviceModel.sram8t(i_on)
        wire = WireModel.preset(preset)
        for _ in range(20):
            stored = rng.integers(0, 2, 64)
            gates = rng.integers(0, 2, 64)
            p = _problem(stored, gates, dev, wire)
            a = solve_column_fast(p, tol=1e-9, max_iter=2000)
            b = solve_column_dense(p, tol=1e-9)
            assert a.converged and b.converged
            ref = max(b.i_out, dev.i_off * 64)
            assert abs(a.i_out - b.i_out) / ref < 0.005

    def test_same_end_topology(self, rng):
        dev = DeviceModel.sram8t()
        wire = WireModel.preset("M3")
        stored = rng.integers(0, 2, 32)
        gates = rng.integers(0, 2, 32)
        a = solve_column_fast(_problem(stored, gates, dev, wire, "same"), tol=1e-10)
        b = solve_column_dense(_problem(stored, gates, dev, wire, "same"), tol=1e-10)
        assert abs(a.i_out - b.i_out) / b.i_out < 1e-6
        # opposite-end sensing is the worst case for this drive layout
        c = solve_column_fast(_problem(stored, gates, dev, wire, "opposite"), tol=1e-10)
        assert c.i_out <= a.i_out + 1e-12


class TestLinearLadder:
    def test_single_cell_divider(self):
        # one ohmic cell: i = g*v / (1 + g*(r_drv + r_bl + r_sl))
        wire = WireModel(20.0, 30.0, 1000.0, 0.0)
        g = np.array([1e-6 / V])
        i_out, v_bl, v_sl, i_cell = solve_column_linear_ladder(g, wire, V)
        expect = g[0] * V / (1 + g[0] * (1000.0 + 20.0 + 30.0))
        assert i_out == pytest.approx(expect, rel=1e-12)
        assert v_bl[0] == pytest.approx(V - (1000.0 + 20.0) * i_out, rel=1e-12)
        assert v_sl[0] == pytest.approx(30.0 * i_out, rel=1e-12)

    @pytest.mark.parametrize("topology", ["opposite", "same"])
    def test_against_independent_nodal_solve(self, rng, topology):
        wire = WireModel(40.0, 40.0, 1000.0, 1000.0)
        for n in (2, 5, 64):
            g = np.where(rng.integers(0, 2, n) > 0, 1e-6 / V, 0.0)
            if g.sum() == 0:
                g[0] = 1e-6 / V
            i_cf, vb_cf, vs_cf, _ = solve_column_linear_ladder(g, wire, V, topology)
            i_ref, vb_ref, vs_ref = nodal_reference_linear(
                g, wire.r_bl_per_cell, wire.r_sl_per_cell, wire.r_driver, V, topology
            )
            assert i_cf == pytest.approx(i_ref, rel=1e-11)
            assert np.abs(vb_cf - vb_ref).max() < 1e-12
            assert np.abs(vs_cf - vs_ref).max() < 1e-12

    def test_dense_solver_matches_closed_form(self, rng):
        dev = _clean_device(curve="linear")
        wire = WireModel.preset("M3")
        stored = rng.integers(0, 2, 64)
        gates = rng.integers(0, 2, 64)
        g = np.where((stored > 0) & (gates > 0), dev.i_on / V, 0.0)
        i_cf, _, _, _ = solve_column_linear_ladder(g, wire, V)
        res = solve_column_dense(_problem(stored, gates, dev, wire), tol=1e-12)
        assert abs(res.i_out - i_cf) / i_cf < 1e-9


class TestResultInvariants:
    def test_conservation_and_bounds(self, rng):
        p = _problem(rng.integers(0, 2, 64), rng.integers(0, 2, 64))
        for res in (solve_column_fast(p, tol=1e-8), solve_column_dense(p, tol=1e-8)):
            assert res.i_out == pytest.approx(res.i_cell.sum(), rel=1e-9)
            assert np.all(res.v_bl >= -1e-12) and np.all(res.v_bl <= V + 1e-12)
            assert np.all(res.v_sl >= -1e-12) and np.all(res.v_sl <= V + 1e-12)
            assert np.all(res.v_bl - res.v_sl >= -1e-12)  # no reverse-biased cells

    def test_monotone_degradation(self):
        stored = np.ones(64, int)
        prev = np.inf
        for r in (0.0, 5.0, 20.0, 40.0, 100.0):
            res = solve_column_fast(
                _problem(stored, stored, wire=WireModel(r, r, 1000.0, 0.0)), tol=1e-9
            )
            assert res.i_out <= prev + 1e-15
            prev = res.i_out
        prev = np.inf
        for rd in (0.0, 500.0, 1000.0, 5000.0):
            res = solve_column_fast(
                _problem(stored, stored, wire=WireModel(20.0, 20.0, rd, 0.0)), tol=1e-9
            )
            assert res.i_out <= prev + 1e-15
            prev = res.i_out

    def test_nonconvergence_is_flagged(self):
        p = _problem(np.ones(64, int), np.ones(64, int))
        res = solve_column_fast(p, tol=1e-12, max_iter=2)
        assert not res.converged
        assert res.residual > 1e-12
        assert res.iterations == 2

    def test_batch_matches_single(self, rng):
        stored = rng.integers(0, 2, (10, 32))
        gates = rng.integers(0, 2, (10, 32))
        batch = solve_columns_fast(
            stored, gates, DeviceModel.sram8t(), WireModel.preset("M4"), V, tol=1e-9
        )
        for b in (0, 3, 9):
            single = solve_column_fast(
                _problem(stored[b], gates[b], wire=WireModel.preset("M4")), tol=1e-9
            )
            assert batch.i_out[b] == pytest.approx(single.i_out, rel=1e-12)
        assert batch.converged.all()

    def test_gate_broadcast(self, rng):
        stored = rng.integers(0, 2, (6, 16))
        gates = rng.integers(0, 2, 16)
        batch = solve_columns_fast(
            stored, gates, DeviceModel.sram8t(), WireModel.preset("M6"), V
        )
        assert batch.i_out.shape == (6,)


class TestProblemValidation:
    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ColumnProblem(4, np.ones(3, int), np.ones(4, int),
                          DeviceModel.sram8t(), WireModel.preset("M3"), V)

    def test_bad_bits(self):
        with pytest.raises(DomainError):
            ColumnProblem(2, np.array([0, 2]), np.array([1, 1]),
                          DeviceModel.sram8t(), WireModel.preset("M3"), V)

    def test_bad_drive(self):
        with pytest.raises(DomainError):
            ColumnProblem(2, np.ones(2, int), np.ones(2, int),
                          DeviceModel.sram8t(), WireModel.preset("M3"), 0.0)

    def test_bad_topology(self):
        with pytest.raises(DomainError):
            ColumnProblem(2, np.ones(2, int), np.ones(2, int),
                          DeviceModel.sram8t(), WireModel.preset("M3"), V,
                          topology="diagonal")

    def test_solver_arg_validation(self):
        p = _problem(np.ones(4, int), np.ones(4, int))
        with pytest.raises(DomainError):
            solve_column_fast(p, tol=0.0)
        with pytest.raises(DomainError):
            solve_column_fast(p, damping=1.5)
