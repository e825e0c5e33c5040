import numpy as np
import pytest

from delaylq import (CSVFormatError, DomainError, GridSpec, ModelParams,
                     ParameterError, StateError, export_csv, import_csv,
                     init_top_slice, max_abs_diff, max_abs_diff_slices,
                     solve_single)


@pytest.fixture(scope="module")
def top_grid():
    params = ModelParams(b=0.5, sigma=1.0, d=0.5, T=1.5)
    spec = GridSpec.build(d=0.5, T=1.5, m=16)
    return init_top_slice(params, spec)


class TestGridSpec:
    def test_alignment(self):
        spec = GridSpec.build(d=0.5, T=1.5, m=8)
        assert spec.h == 0.5 / 8
        assert spec.n_t == 24
        assert spec.t_snap == 0.0
        assert spec.slice_index_bounds == ((16, 24), (8, 16), (0, 8))

    def test_truncated_last_slice(self):
        spec = GridSpec.build(d=0.2, T=0.5, m=4)
        # slices 0.3-0.5, 0.1-0.3, 0.0-0.1 (truncated)
        assert spec.slice_index_bounds == ((6, 10), (2, 6), (0, 2))

    def test_snap_recorded(self):
        spec = GridSpec.build(d=0.3, T=1.0, m=3)
        assert spec.t_snap > 0.0
        assert spec.n_t == 10
        assert spec.T == pytest.approx(1.0, abs=spec.h / 2)

    def test_invalid(self):
        with pytest.raises(ParameterError):
            GridSpec.build(d=0.0, T=1.0, m=4)
        with pytest.raises(ParameterError):
            GridSpec.build(d=0.5, T=1.0, m=0)


class TestTopSlice:
    def test_terminal_row(self, top_grid):
        n_t = top_grid.spec.n_t
        assert top_grid.p11[n_t] == 1.0
        assert np.all(top_grid.p12[n_t] == 0.0)
        assert np.all(top_grid.p22[n_t] == 0.0)

    def test_p12_at_T_minus_d(self, top_grid):
        j = top_grid.spec.n_t - top_grid.spec.m
        assert np.all(top_grid.p12[j] == 0.5)

    def test_indicator_surfaces(self, top_grid):
        spec = top_grid.spec
        n_t, m = spec.n_t, spec.m
        for j in range(n_t - m, n_t + 1):
            for i in range(m + 1):
                if j + i > n_t:
                    assert top_grid.p12[j, i] == 0.0
                elif j < n_t:
                    assert top_grid.p12[j, i] == 0.5
        # mixed p22 point: t+s+d <= T but t+r+d > T -> zero
        j = n_t - m // 2
        assert top_grid.p22[j, 0, m] == 0.0
        assert top_grid.p22[j, 0, 0] == 0.25

    def test_unsolved_region_nan(self, top_grid):
        assert np.isnan(top_grid.p11[0])
        assert not top_grid.fully_solved

    def test_eval_in_unsolved_region_raises(self, top_grid):
        with pytest.raises(StateError):
            top_grid.eval("11", 0.0)


class TestEval:
    def test_terminal_values(self, ref_grid64):
        grid, _ = ref_grid64
        assert grid.eval("11", 1.5) == 1.0
        assert grid.eval("12", 1.5, -0.25) == 0.0
        assert grid.eval("22", 1.5, -0.25, -0.1) == 0.0
        # the corner (T, -d) carries the terminal data, like the stored row
        assert grid.eval("12", 1.5, -0.5) == 0.0
        assert grid.eval("22", 1.5, -0.5, -0.5) == 0.0

    def test_p2hat2_gate(self, ref_grid64):
        grid, _ = ref_grid64
        assert grid.eval("2hat2", 1.2, 0.0) == 0.0
        assert grid.eval("2hat2", 1.0, 0.0) == pytest.approx(1.0)

    def test_p2hat2_identity_off_node(self, ref_grid64):
        grid, _ = ref_grid64
        t, s = 0.3123, -0.2234
        expected = grid.params.sigma ** 2 * grid.eval("11", t + s + 0.5)
        assert grid.eval("2hat2", t, s) == pytest.approx(expected, rel=1e-12)

    def test_boundary_interpolation(self, ref_grid64):
        grid, _ = ref_grid64
        h = grid.spec.h
        t = 1.0 - h / 2  # T - d - h/2
        v = grid.eval("12", t, -0.5)
        assert v == pytest.approx(0.5 * grid.eval("11", t), rel=1e-12)

    def test_eval_matches_nodes(self, ref_grid64):
        grid, _ = ref_grid64
        spec = grid.spec
        rng = np.random.default_rng(7)
        for _ in range(50):
            j = rng.integers(0, spec.n_t)
            i = rng.integers(0, spec.m + 1)
            l = rng.integers(0, spec.m + 1)
            t, s, r = j * spec.h, i * spec.h - spec.d, l * spec.h - spec.d
            assert grid.eval("12", t, s) == pytest.approx(
                grid.p12[j, i], rel=1e-12, abs=1e-15)
            assert grid.eval("22", t, s, r) == pytest.approx(
                grid.p22[j, i, l], rel=1e-12, abs=1e-15)

    def test_top_region_never_mixes_sides(self, ref_grid64):
        grid, _ = ref_grid64
        T, d = grid.spec.T, grid.spec.d
        h = grid.spec.h
        # just inside the surface t+s+d = T: full inside value, no smearing
        t = T - 0.3 * d
        s = (T - d - t) - 0.25 * h
        assert grid.eval("12", t, s) == pytest.approx(
            0.5 * grid.eval("11", t), rel=1e-12)
        # just outside: exact zero
        s_out = (T - d - t) + 0.25 * h
        assert grid.eval("12", t, s_out) == 0.0
        assert grid.eval("22", t, -d, s_out) == 0.0

    def test_domain_errors(self, ref_grid64):
        grid, _ = ref_grid64
        with pytest.raises(DomainError):
            grid.eval("11", -0.2)
        with pytest.raises(DomainError):
            grid.eval("11", 2.0)
        with pytest.raises(DomainError):
            grid.eval("12", 0.5, -0.9)
        with pytest.raises(DomainError):
            grid.eval("22", 0.5, -0.2, 0.4)


class TestNodeInvariants:
    def test_boundary_rows(self, ref_grid64):
        grid, _ = ref_grid64
        spec = grid.spec
        cut = spec.n_t - spec.m  # nodes with t <= T-d
        b = grid.params.b
        assert np.allclose(grid.p12[:cut + 1, 0], b * grid.p11[:cut + 1],
                           rtol=0, atol=1e-10)
        assert np.allclose(grid.p22[:cut + 1, :, 0], b * grid.p12[:cut + 1, :],
                           rtol=0, atol=1e-10)

    def test_symmetry(self, ref_grid64):
        grid, _ = ref_grid64
        assert np.max(np.abs(grid.p22 - grid.p22.transpose(0, 2, 1))) <= 1e-12

    def test_indicator_zeros_everywhere(self, ref_grid64):
        grid, _ = ref_grid64
        spec = grid.spec
        j = np.arange(spec.n_t + 1)[:, None]
        i = np.arange(spec.m + 1)[None, :]
        off = (j + i) > spec.n_t
        assert np.all(grid.p12[off] == 0.0)
        maxil = np.maximum(i[:, :, None], i[:, None, :])
        off22 = (j[:, :, None] + maxil) > spec.n_t
        assert np.all(grid.p22[off22] == 0.0)

    def test_piecewise_lipschitz(self, ref_grid64):
        grid, _ = ref_grid64
        spec = grid.spec
        n_t, m = spec.n_t, spec.m
        # estimate L from the topmost varying slice, assert globally
        sl1 = slice(n_t - 2 * m, n_t - m + 1)
        quot = np.abs(np.diff(grid.p11[sl1])) / spec.h
        L = 10.0 * max(float(quot.max()), 1e-12)
        for lo, up in spec.slice_index_bounds[1:]:
            dt = np.abs(np.diff(grid.p11[lo:up + 1])) / spec.h
            assert dt.max() <= L
            ds = np.abs(np.diff(grid.p12[lo:up + 1], axis=1)) / spec.h
            assert ds.max() <= L
            dr = np.abs(np.diff(grid.p22[lo:up + 1], axis=2)) / spec.h
            assert dr.max() <= L


@pytest.fixture(scope="module")
def small_grid():
    params = ModelParams(b=0.4, sigma=0.9, d=0.5, T=1.5)
    spec = GridSpec.build(d=0.5, T=1.5, m=6)
    grid, _ = solve_single(params, spec)
    return grid


class TestCSV:

    @pytest.mark.parametrize("which", ["11", "12", "2hat2", "22"])
    def test_round_trip(self, small_grid, tmp_path, which):
        path = tmp_path / f"p{which}.csv"
        export_csv(small_grid, which, path)
        sl = import_csv(path)
        assert sl.kernel == which
        vals = small_grid.node_values(which)
        assert np.array_equal(sl.values, vals)  # 17 digits: exact
        assert np.allclose(sl.t, small_grid.spec.t_nodes())

    def test_header_mismatch(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("t,s,r,value\n")
        with pytest.raises(CSVFormatError):
            import_csv(path)

    def test_bad_number_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("kernel,t,s,r,value\n11,0.0,,,1.0\n11,zork,,,1.0\n")
        with pytest.raises(CSVFormatError, match="line 3"):
            import_csv(path)

    def test_wrong_column_count(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("kernel,t,s,r,value\n11,0.0,,1.0\n")
        with pytest.raises(CSVFormatError, match="line 2"):
            import_csv(path)

    def test_partial_region_marked_unsolved(self, tmp_path):
        params = ModelParams(b=0.4, sigma=0.9, d=0.5, T=1.5)
        spec = GridSpec.build(d=0.5, T=1.5, m=4)
        top = init_top_slice(params, spec)  # only [T-d, T] solved
        path = tmp_path / "p12.csv"
        export_csv(top, "12", path)
        sl = import_csv(path)
        assert len(sl.t) == spec.m + 1  # rows below T-d omitted
        assert sl.solved_mask.all()

    def test_row_order_lexicographic(self, small_grid, tmp_path):
        path = tmp_path / "p22.csv"
        export_csv(small_grid, "22", path)
        rows = path.read_text().splitlines()[1:]
        keys = []
        for row in rows:
            _, t, s, r, _ = row.split(",")
            keys.append((float(t), float(s), float(r)))
        assert keys == sorted(keys)


class TestMaxAbsDiff:
    def test_self_diff_zero(self, ref_grid32):
        grid, _ = ref_grid32
        for which in ("11", "12", "2hat2", "22"):
            diff, _ = max_abs_diff(grid, grid, which)
            assert diff == 0.0

    def test_single_node_perturbation(self, ref_grid32):
        import copy
        grid, _ = ref_grid32
        other = copy.deepcopy(grid)
        other.p12[5, 3] += 2.5e-4
        diff, point = max_abs_diff(grid, other, "12")
        assert diff == pytest.approx(2.5e-4)
        assert point[0] == pytest.approx(5 * grid.spec.h)
        assert point[1] == pytest.approx(3 * grid.spec.h - grid.spec.d)

    def test_spec_mismatch_rejected(self, ref_grid32, ref_grid64):
        g32, _ = ref_grid32
        g64, _ = ref_grid64
        with pytest.raises(ParameterError):
            max_abs_diff(g32, g64, "11")

    def test_slice_comparison(self, ref_grid32, tmp_path):
        grid, _ = ref_grid32
        export_csv(grid, "12", tmp_path / "a.csv")
        export_csv(grid, "12", tmp_path / "b.csv")
        sa = import_csv(tmp_path / "a.csv")
        sb = import_csv(tmp_path / "b.csv")
        diff, point, n = max_abs_diff_slices(sa, sb)
        assert diff == 0.0
        assert n == (grid.spec.n_t + 1) * (grid.spec.m + 1)
