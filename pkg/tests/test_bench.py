import numpy as np
import pytest

from netconsensus import bench, data


class TestFitReciprocal:
    def test_noiseless_recovery_free_pole(self):
        deltas = np.linspace(0.0, 0.08, 9)
        taus = 5.0 / (0.1 - deltas)
        fit = bench.fit_reciprocal((deltas, taus))
        assert fit.a == pytest.approx(5.0, abs=1e-6)
        assert fit.c == pytest.approx(0.1, abs=1e-6)
        assert fit.r2 > 1 - 1e-9
        assert not fit.pole_fixed

    def test_noiseless_recovery_fixed_pole(self):
        deltas = np.linspace(0.0, 0.08, 9)
        taus = 5.0 / (0.1 - deltas)
        fit = bench.fit_reciprocal((deltas, taus), fix_pole=0.1)
        assert fit.a == pytest.approx(5.0, abs=1e-9)
        assert fit.pole_fixed

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_noisy_recovery_within_five_percent(self, seed):
        rng = np.random.default_rng(seed)
        deltas = np.linspace(0.0, 0.08, 12)
        taus = 3.0 / (0.12 - deltas) * (1.0 + 0.01 * rng.standard_normal(12))
        fit = bench.fit_reciprocal((deltas, taus))
        assert fit.c == pytest.approx(0.12, rel=0.05)

    def test_insufficient_rows_rejected(self):
        with pytest.raises(bench.FitError):
            bench.fit_reciprocal((np.array([0.0, 0.1]), np.array([1.0, 2.0])))

    def test_pole_inside_data_rejected(self):
        deltas = np.array([0.0, 0.05, 0.1])
        with pytest.raises(bench.FitError):
            bench.fit_reciprocal((deltas, 1.0 / (0.2 - deltas)), fix_pole=0.05)

    def test_sweep_rows_accepted(self):
        rows = [
            bench.SweepRow(delta=d, p_out=0.1 - d, tau_median=2.0 / (0.1 - d), tau_iqr=0.0,
                           lambda2_emp=None, lambda2_pred=0.5, lambdaL=0.8, censored=0)
            for d in (0.0, 0.02, 0.04, 0.06)
        ]
        fit = bench.fit_reciprocal(rows, fix_pole=0.1)
        assert fit.a == pytest.approx(2.0, abs=1e-9)

    def test_censored_rows_skipped(self):
        rows = [
            bench.SweepRow(delta=d, p_out=0.1 - d, tau_median=2.0 / (0.1 - d), tau_iqr=0.0,
                           lambda2_emp=None, lambda2_pred=0.5, lambdaL=0.8, censored=0)
            for d in (0.0, 0.02, 0.04)
        ]
        rows.append(bench.SweepRow(delta=0.09, p_out=0.01, tau_median=None, tau_iqr=None,
                                   lambda2_emp=None, lambda2_pred=0.1, lambdaL=0.8, censored=5))
        fit = bench.fit_reciprocal(rows, fix_pole=0.1)
        assert fit.a == pytest.approx(2.0, abs=1e-9)

    def test_inverse_lambda2_form(self):
        lam2 = np.array([0.8, 0.4, 0.2, 0.1, 0.05])
        taus = 3.0 / lam2
        fit = bench.fit_inverse_lambda2(lam2, taus)
        assert fit.a == pytest.approx(3.0, abs=1e-9)
        assert fit.r2 > 1 - 1e-12


class TestLogSpaced:
    def test_endpoints_inclusive(self):
        grid = bench.log_spaced(1e-3, 0.1, 12)
        assert grid[0] == pytest.approx(1e-3)
        assert grid[-1] == pytest.approx(0.1)
        assert len(grid) == 12

    def test_invalid_range(self):
        with pytest.raises(ValueError):
            bench.log_spaced(0.0, 0.1, 5)


class TestSweep:
    def make_config(self, **overrides):
        base = dict(
            sizes=(25, 25), p_in=0.5, p_out_list=(0.2,), seeds_per_point=1,
            epsilon=1e-8, mode="scalar", base_seed=3, max_rounds=20_000,
        )
        base.update(overrides)
        return bench.SweepConfig(**base)

    def test_single_point_matches_single_run(self):
        rows = bench.sweep(self.make_config())
        assert len(rows) == 1
        row = rows[0]
        assert row.error is None
        assert row.delta == pytest.approx(0.3)
        assert row.tau_median is not None
        assert row.tau_iqr == 0.0
        assert row.censored == 0
        assert row.n_runs == 1

    def test_reproducible_rows(self):
        a = bench.sweep(self.make_config(seeds_per_point=2))
        b = bench.sweep(self.make_config(seeds_per_point=2))
        assert a == b

    def test_worker_count_does_not_change_results(self):
        cfg1 = self.make_config(p_out_list=(0.15, 0.3, 0.5), seeds_per_point=2)
        cfg4 = self.make_config(p_out_list=(0.15, 0.3, 0.5), seeds_per_point=2, workers=4)
        assert bench.sweep(cfg1) == bench.sweep(cfg4)

    def test_gadget_smoke_two_points(self):
        ds = data.make_blobs(300, 4, margin=2.0, seed=5)
        cfg = self.make_config(
            sizes=(10, 15), p_in=0.8, p_out_list=(0.2, 0.6), mode="gadget",
            epsilon=1e-8, max_rounds=20_000, learning_rounds=30,
        )
        rows = bench.sweep(cfg, dataset=ds)
        assert len(rows) == 2
        for row in rows:
            assert row.error is None
            assert row.tau_median is not None
            assert row.accuracy_mean is not None

    def test_mode_validation(self):
        with pytest.raises(ValueError):
            self.make_config(mode="other")

    def test_p_out_range_validation(self):
        with pytest.raises(ValueError):
            self.make_config(p_out_list=(0.9,))

    def test_gadget_requires_dataset(self):
        with pytest.raises(ValueError):
            bench.sweep(self.make_config(mode="gadget"))

    def test_csv_roundtrip_and_byte_reproducibility(self, tmp_path):
        rows = bench.sweep(self.make_config(p_out_list=(0.2, 0.4), seeds_per_point=2))
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        bench.rows_to_csv(rows, p1)
        bench.rows_to_csv(rows, p2)
        assert p1.read_bytes() == p2.read_bytes()
        back = bench.rows_from_csv(p1)
        assert [r.delta for r in back] == [r.delta for r in rows]
        assert [r.tau_median for r in back] == [r.tau_median for r in rows]


class TestDetectBifurcation:
    def test_out_of_range_for_merged_only_grid(self):
        with pytest.raises(bench.BifurcationRangeError):
            bench.detect_bifurcation([700, 300], 0.1, [0.005])

    def test_out_of_range_for_separated_only_grid(self):
        with pytest.raises(bench.BifurcationRangeError):
            bench.detect_bifurcation([700, 300], 0.1, [0.06, 0.08])

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            bench.detect_bifurcation([700, 300], 0.1, [0.05, 0.02])
        with pytest.raises(ValueError):
            bench.detect_bifurcation([700, 300], 0.1, [0.05, 0.2])

    def test_locates_transition_in_interior(self):
        delta1 = bench.detect_bifurcation([700, 300], 0.1, [0.01, 0.03, 0.05], refine_tol=1e-3)
        assert 0.03 < delta1 < 0.05
