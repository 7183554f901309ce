"""
Tests for current status datasets, the monitoring grid and the NPMLE
"""

import numpy as np
import pytest

from promocure.core.dataset import (
    ColumnSchema,
    CurrentStatusDataset,
    MonitoringGrid,
    Observation,
    build_grid,
    group_to_midpoints,
    load_dataset,
    npmle_by_group,
    npmle_survival,
    write_npmle,
)
from promocure.core.errors import DataParseError, DataValidationError, DimensionError
from promocure.utils.helpers import read_table


class TestGrid:
    """Monitoring grid construction"""

    def test_sorted_unique(self):
        grid = build_grid([2.0, 0.5, 1.0, 0.5])
        assert grid.knots.tolist() == [0.5, 1.0, 2.0]
        assert grid.n0 == 3

    def test_idempotent(self):
        grid = build_grid([3.0, 1.0, 2.0, 2.0])
        assert build_grid(grid.knots) == grid

    def test_rejects_bad_times(self):
        with pytest.raises(DataValidationError):
            build_grid([])
        with pytest.raises(DataValidationError):
            build_grid([1.0, -0.5])
        with pytest.raises(DataValidationError):
            MonitoringGrid(np.array([1.0, 1.0]))

    def test_count_at_or_below(self):
        grid = build_grid([0.3, 0.6, 0.9])
        assert grid.count_at_or_below(0.1) == 0
        assert grid.count_at_or_below(0.6) == 2
        assert grid.count_at_or_below(5.0) == 3


class TestDataset:
    """In-memory construction and validation"""

    def test_knot_index_consistency(self):
        u = [0.9, 0.3, 0.6, 0.3, 0.9]
        data = CurrentStatusDataset.from_arrays(u, [0, 1, 0, 1, 1])
        knots = data.grid.knots
        for u_i, k in zip(data.u, data.knot_index):
            assert knots[k - 1] == u_i
            assert k == data.grid.n0 or knots[k] > u_i

    def test_intercept_synthesized(self, toy_data):
        assert np.all(toy_data.X[:, 0] == 1.0)
        assert toy_data.n_theta == 2
        assert len(toy_data) == 3

    def test_observations(self, toy_data):
        obs = toy_data.observations
        assert isinstance(obs[0], Observation)
        assert obs[1].delta == 0
        assert obs[1].x.tolist() == [1.0, 1.0]

    def test_invalid_status_reports_row(self):
        with pytest.raises(DataValidationError, match="data row 2"):
            CurrentStatusDataset.from_arrays([1.0, 2.0], [0, 2])

    def test_nonpositive_time(self):
        with pytest.raises(DataValidationError, match="data row 1"):
            CurrentStatusDataset.from_arrays([0.0, 2.0], [0, 1])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            CurrentStatusDataset.from_arrays([1.0, 2.0], [0, 1], [[0.0], [1.0], [2.0]])

    def test_empty_on_grid(self):
        grid = build_grid([1.0, 2.0])
        data = CurrentStatusDataset.empty(grid, n_covariates=2)
        assert data.n == 0
        assert data.n_theta == 3
        assert data.grid is grid

    def test_subset_rebuilds_grid(self):
        data = CurrentStatusDataset.from_arrays([0.5, 1.0, 2.0], [1, 0, 1], [[0.0], [1.0], [0.0]])
        sub = data.subset(data.X[:, 1] == 0.0)
        assert sub.n == 2
        assert sub.grid.knots.tolist() == [0.5, 2.0]

    def test_arrays_are_read_only(self, toy_data):
        with pytest.raises(ValueError):
            toy_data.u[0] = 10.0


class TestLoader:
    """Delimited file loading"""

    def test_load_csv_with_comments(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("# provenance line\nu,delta,group\n1.0,1,0\n2.0,0,1\n2.0,1,1\n")
        data = load_dataset(path, ColumnSchema(covariate_cols=("group",)))
        assert data.n == 3
        assert data.grid.knots.tolist() == [1.0, 2.0]
        assert data.X[:, 1].tolist() == [0.0, 1.0, 1.0]

    def test_tab_delimited(self, tmp_path):
        path = tmp_path / "data.tsv"
        path.write_text("time\tstatus\n1.5\t0\n2.5\t1\n")
        data = load_dataset(path, ColumnSchema(time_col="time", status_col="status"))
        assert data.u.tolist() == [1.5, 2.5]

    def test_unparseable_value(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("u,delta\n1.0,1\nabc,0\n")
        with pytest.raises(DataParseError, match="data row 2"):
            load_dataset(path)

    def test_missing_value(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("u,delta\n1.0,\n")
        with pytest.raises(DataParseError, match="missing value"):
            load_dataset(path)

    def test_extra_field_names_data_row(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("# provenance line\nu,delta,x\n1.0,1,0\n2.0,0,1,7\n3.0,1,0\n")
        with pytest.raises(DataParseError, match="data row 2") as info:
            load_dataset(path, ColumnSchema(covariate_cols=("x",)))
        assert info.value.row == 2

    def test_missing_column(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("u,status\n1.0,1\n")
        with pytest.raises(DataValidationError, match="delta"):
            load_dataset(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataValidationError, match="not found"):
            load_dataset(tmp_path / "absent.csv")


class TestNpmle:
    """Isotonic NPMLE of the survival function"""

    def test_increasing_fractions_reproduced(self):
        # per-knot event fractions 0, 1/2, 2/3 already increase
        u = [1, 1, 2, 2, 3, 3, 3]
        delta = [0, 0, 0, 1, 0, 1, 1]
        estimate = npmle_survival(CurrentStatusDataset.from_arrays(u, delta))
        assert estimate.survival == pytest.approx([1.0, 0.5, 1.0 / 3.0])

    def test_violators_pooled(self):
        # fractions 1, 0 pool to 1/2 at both knots
        estimate = npmle_survival(CurrentStatusDataset.from_arrays([1, 2], [1, 0]))
        assert estimate.survival == pytest.approx([0.5, 0.5])

    def test_equal_counts_pool_to_monotone_grid_optimum(self):
        # raw fractions 0.6, 0.2, 0.8 with five subjects per knot
        u = [1] * 5 + [2] * 5 + [3] * 5
        delta = [1, 1, 1, 0, 0] + [1, 0, 0, 0, 0] + [1, 1, 1, 1, 0]
        estimate = npmle_survival(CurrentStatusDataset.from_arrays(u, delta))
        assert estimate.event_fraction == pytest.approx([0.6, 0.2, 0.8])
        assert 1.0 - estimate.survival == pytest.approx([0.4, 0.4, 0.8])

        # exhaustive search over nondecreasing F on a 0.01 grid
        g = np.linspace(0.01, 0.99, 99)
        events, counts = np.array([3, 1, 4]), np.array([5, 5, 5])
        ll = events[:, None] * np.log(g) + (counts - events)[:, None] * np.log1p(-g)
        f1, f2, f3 = np.meshgrid(g, g, g, indexing="ij")
        total = ll[0][:, None, None] + ll[1][None, :, None] + ll[2][None, None, :]
        total = np.where((f1 <= f2) & (f2 <= f3), total, -np.inf)
        best = np.unravel_index(np.argmax(total), total.shape)
        assert [g[i] for i in best] == pytest.approx(1.0 - estimate.survival, abs=1e-9)

    def test_no_events_gives_unit_survival(self):
        estimate = npmle_survival(CurrentStatusDataset.from_arrays([0.5, 1.0, 1.0, 2.0], [0, 0, 0, 0]))
        assert estimate.survival == pytest.approx([1.0, 1.0, 1.0])

    def test_all_events_gives_zero_survival(self):
        estimate = npmle_survival(CurrentStatusDataset.from_arrays([0.5, 1.0, 1.0, 2.0], [1, 1, 1, 1]))
        assert estimate.survival == pytest.approx([0.0, 0.0, 0.0])

    def test_monotone_and_bounded(self, rng):
        u = rng.uniform(0.1, 3.0, size=200)
        delta = rng.random(200) < u / 3.0
        estimate = npmle_survival(CurrentStatusDataset.from_arrays(u, delta.astype(int)))
        assert np.all(np.diff(estimate.survival) <= 1e-12)
        assert np.all((estimate.survival >= 0) & (estimate.survival <= 1))

    def test_by_group(self):
        data = CurrentStatusDataset.from_arrays([1, 2, 1, 2], [0, 1, 1, 1], [[0], [0], [1], [1]])
        groups = npmle_by_group(data, 1)
        assert set(groups) == {0.0, 1.0}
        assert groups[1.0].survival == pytest.approx([0.0, 0.0])
        with pytest.raises(DimensionError):
            npmle_by_group(data, 2)

    def test_write(self, tmp_path):
        estimate = npmle_survival(CurrentStatusDataset.from_arrays([1, 2], [0, 1]))
        path = write_npmle(estimate, tmp_path / "npmle.csv", ["config_hash: abc"])
        frame = read_table(path)
        assert frame.columns.tolist() == ["knot", "survival"]
        assert path.read_text().startswith("# config_hash: abc\n")


class TestMidpoints:
    """Grouping exact times into interval midpoints"""

    def test_half_open_intervals(self):
        mids = group_to_midpoints([0.5, 1.0, 2.5, 4.0], [0.0, 1.0, 2.0, 4.0])
        assert mids.tolist() == [0.5, 1.5, 3.0, 3.0]

    def test_out_of_range(self):
        with pytest.raises(DataValidationError):
            group_to_midpoints([5.0], [0.0, 1.0])
