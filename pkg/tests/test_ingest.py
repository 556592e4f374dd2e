import json
from datetime import date, datetime, timedelta

import numpy as np
import pytest

from core.errors import DataError, HyperRiskError
from harness.data import ingest_dataset, load_prepared, open_dataset, save_prepared
from ingest.extract import RegionCatalog, load_accidents, load_adjacency, load_regions, read_table
from ingest.manifest import MANIFEST_NAME, load_manifest
from ingest.normalize import (
    aggregate_weather,
    calendar_columns,
    encode_calendar,
    generated_holidays,
    load_urban_features,
    read_holidays,
    read_weather,
    standardize,
)
from ingest.writers import write_city
from risk.scores import compute_risk_scores
from risk.synthetic import SyntheticCity

ORIGIN = datetime(2021, 1, 1)


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


@pytest.fixture
def catalog():
    return RegionCatalog.from_ids([f"r{i}" for i in range(10)])


class TestRegionsAndAdjacency:
    """Region catalog and undirected edge list"""

    def test_duplicate_region(self, tmp_path):
        """A repeated region id is located by line"""
        path = _write(tmp_path / "regions.csv", "region_id\na\nb\na\n")
        with pytest.raises(DataError, match="line 4"):
            load_regions(path)

    def test_missing_header(self, tmp_path):
        """A missing column is a header error"""
        path = _write(tmp_path / "regions.csv", "id\na\n")
        with pytest.raises(DataError, match="missing header"):
            load_regions(path)

    def test_empty_file(self, tmp_path):
        """An empty file has no header row"""
        path = _write(tmp_path / "regions.csv", "")
        with pytest.raises(DataError, match="header row is mandatory"):
            load_regions(path)

    def test_symmetric_and_idempotent(self, tmp_path):
        """Edges are undirected and duplicates collapse"""
        catalog = RegionCatalog.from_ids(["a", "b", "c"])
        path = _write(tmp_path / "adjacency.csv", "region_a,region_b\na,b\nb,a\nb,c\n")
        catalog, issues = load_adjacency(path, catalog)
        expected = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
        np.testing.assert_array_equal(catalog.adjacency, expected)
        assert not issues.rejected_rows

    def test_self_loop_rejected(self, tmp_path):
        """Self-loops are dropped and reported"""
        catalog = RegionCatalog.from_ids(["a", "b"])
        path = _write(tmp_path / "adjacency.csv", "region_a,region_b\na,a\na,b\n")
        catalog, issues = load_adjacency(path, catalog)
        assert issues.self_loops == ["a"]
        assert issues.rejected_rows[0].line == 2
        assert catalog.adjacency[0, 0] == 0

    def test_unknown_endpoint(self, tmp_path):
        """Unknown endpoints are located by line and column"""
        catalog = RegionCatalog.from_ids(["a", "b"])
        path = _write(tmp_path / "adjacency.csv", "region_a,region_b\na,b\na,z\n")
        with pytest.raises(DataError, match="line 3:column 'region_b'"):
            load_adjacency(path, catalog)

    def test_isolated_region_noted(self, tmp_path):
        """Regions without neighbours are noted"""
        catalog = RegionCatalog.from_ids(["a", "b", "c"])
        path = _write(tmp_path / "adjacency.csv", "region_a,region_b\na,b\n")
        _, issues = load_adjacency(path, catalog)
        assert any("c" in note for note in issues.notes)

    def test_malformed_row_located(self, tmp_path):
        """A ragged row is located by line"""
        path = _write(tmp_path / "adjacency.csv", "region_a,region_b\na,b\na,b,c\n")
        with pytest.raises(DataError, match="line 3"):
            read_table(path, ["region_a", "region_b"])


class TestAccidents:
    """Accident records onto the common time axis"""

    def test_time_index(self, tmp_path, catalog):
        """Timestamp to daily time index"""
        path = _write(tmp_path / "accidents.csv", "region_id,timestamp,severity\nr7,2021-03-01T13:00:00,2\n")
        events, issues = load_accidents(path, catalog, ORIGIN, 24)
        assert len(events) == 1
        assert events[0].region_index == 7
        assert events[0].time_index == 59
        assert events[0].severity == 2
        assert not issues.rejected_rows

    def test_half_day_interval(self, tmp_path, catalog):
        """Timestamp to 12 h time index"""
        path = _write(tmp_path / "accidents.csv", "region_id,timestamp,severity\nr7,2021-03-01T13:00:00,2\n")
        events, _ = load_accidents(path, catalog, ORIGIN, 12)
        assert events[0].time_index == 119

    def test_severity_labels(self, tmp_path, catalog):
        """Severity accepts labels in any case and digits"""
        text = "region_id,timestamp,severity\nr0,2021-01-01,slight\nr0,2021-01-01,Fatal\nr0,2021-01-01,2\n"
        events, _ = load_accidents(_write(tmp_path / "a.csv", text), catalog, ORIGIN, 24)
        assert [e.severity for e in events] == [1, 3, 2]

    def test_invalid_severity(self, tmp_path, catalog):
        """Unknown severity is located by line and column"""
        text = "region_id,timestamp,severity\nr0,2021-01-01,1\nr0,2021-01-01,minor\n"
        with pytest.raises(DataError, match="line 3:column 'severity'"):
            load_accidents(_write(tmp_path / "a.csv", text), catalog, ORIGIN, 24)

    def test_bad_timestamp(self, tmp_path, catalog):
        """Unparseable timestamps are data errors"""
        text = "region_id,timestamp,severity\nr0,not-a-date,1\n"
        with pytest.raises(DataError, match="timestamp"):
            load_accidents(_write(tmp_path / "a.csv", text), catalog, ORIGIN, 24)

    def test_skipped_rows_reported(self, tmp_path, catalog):
        """Unknown regions and out-of-axis rows are skipped and listed"""
        text = (
            "region_id,timestamp,severity\n"
            "zz,2021-01-02,1\n"
            "r1,2020-12-31,1\n"
            "r1,2021-02-01,1\n"
            "r1,2021-01-02,1\n"
        )
        events, issues = load_accidents(_write(tmp_path / "a.csv", text), catalog, ORIGIN, 24, n_steps=10)
        assert len(events) == 1
        assert issues.unknown_regions == ["zz"]
        assert [row.line for row in issues.rejected_rows] == [2, 3, 4]

    def test_aware_origin_compared_as_utc(self, tmp_path, catalog):
        """An offset-aware origin is compared against stamps in naive UTC"""
        text = "region_id,timestamp,severity\nr1,2020-12-31T23:00:00,1\nr1,2021-01-02T03:00:00+02:00,1\n"
        origin = datetime.fromisoformat("2021-01-01T00:00:00+00:00")
        events, issues = load_accidents(_write(tmp_path / "a.csv", text), catalog, origin, 24)
        assert [e.time_index for e in events] == [1]
        assert issues.rejected_rows[0].line == 2


class TestUrbanFeatures:
    """POI / road tables"""

    def test_standardize(self):
        """Column z-scores"""
        z, mean, std = standardize(np.array([[0.0], [2.0]]))
        np.testing.assert_allclose(z.ravel(), [-1.0, 1.0])
        assert mean[0] == 1.0
        assert std[0] == 1.0

    def test_constant_column_stays_finite(self):
        """A constant column standardizes to zero"""
        z, _, _ = standardize(np.ones((4, 1)))
        assert np.all(z == 0)

    def test_absent_region_imputed(self, tmp_path):
        """Regions missing from a table get column means"""
        catalog = RegionCatalog.from_ids(["a", "b", "c"])
        poi = _write(tmp_path / "poi.csv", "region_id,shops\na,1\nb,3\n")
        road = _write(tmp_path / "road.csv", "region_id,lanes\na,2\nb,2\nc,5\n")
        features, issues = load_urban_features(poi, road, catalog)
        assert issues.imputed_regions == ["c"]
        assert features.poi[2, 0] == pytest.approx(0.0)
        assert features.poi_columns == ["shops"]

    def test_non_numeric_cell(self, tmp_path):
        """Non-numeric cells are located by line and column"""
        catalog = RegionCatalog.from_ids(["a", "b"])
        poi = _write(tmp_path / "poi.csv", "region_id,shops\na,1\nb,many\n")
        road = _write(tmp_path / "road.csv", "region_id,lanes\na,2\nb,2\n")
        with pytest.raises(DataError, match="line 3:column 'shops'"):
            load_urban_features(poi, road, catalog)


class TestExternalFeatures:
    """Meteorology aggregation and calendar encoding"""

    def setup_method(self):
        self.origin = datetime(2021, 1, 4)  # a Monday

    def test_interval_means_with_forward_fill(self, tmp_path):
        """Hourly forward fill, then interval means"""
        path = _write(
            tmp_path / "weather.csv",
            "timestamp,temperature\n2021-01-04T00:00:00,10\n2021-01-04T01:00:00,12\n2021-01-04T12:00:00,5\n",
        )
        hourly, columns = read_weather(path)
        met = aggregate_weather(hourly, self.origin, 12, 2)
        assert columns == ["temperature"]
        assert met.shape == (2, 1)
        assert met[0, 0] == pytest.approx(142 / 12)
        assert met[1, 0] == pytest.approx(5.0)

    def test_uncovered_stretch_raises(self, tmp_path):
        """Long weather gaps fail ingest"""
        path = _write(
            tmp_path / "weather.csv",
            "timestamp,temperature\n2021-01-04T00:00:00,10\n2021-01-04T12:00:00,5\n",
        )
        hourly, _ = read_weather(path)
        with pytest.raises(DataError, match="does not cover"):
            aggregate_weather(hourly, self.origin, 12, 4, max_gap_hours=6)

    def test_calendar(self):
        """Day of week, AM/PM, holiday and weekend flags"""
        cal = encode_calendar(self.origin, 12, 4, {date(2021, 1, 5)})
        columns = calendar_columns(12)
        assert cal.shape == (4, len(columns))
        assert cal[0, columns.index("dow_mon")] == 1
        assert cal[1, columns.index("pm")] == 1
        assert cal[2, columns.index("dow_tue")] == 1
        assert cal[2, columns.index("holiday")] == 1
        assert cal[0, columns.index("holiday")] == 0
        assert cal[:, columns.index("weekend")].sum() == 0

    def test_daily_calendar_has_no_pm(self):
        """Daily intervals drop the AM/PM flag"""
        assert "pm" not in calendar_columns(24)
        cal = encode_calendar(self.origin, 24, 7, set())
        assert cal[5:, calendar_columns(24).index("weekend")].tolist() == [1, 1]
        np.testing.assert_array_equal(cal[:, :7].sum(axis=1), np.ones(7))

    def test_generated_holidays(self):
        """The holidays package supplies public holidays"""
        days = generated_holidays(ORIGIN, 24, 30, "GB")
        assert date(2021, 1, 1) in days


class TestDatasetIngest:
    """Manifest to aligned arrays"""

    def test_manifest(self, dataset_dir, tiny_city):
        """Manifest sizes and relative paths"""
        manifest = load_manifest(dataset_dir)
        assert manifest.n_regions == 9
        assert manifest.n_steps == 60
        assert manifest.resolve("regions") == dataset_dir / "regions.csv"

    def test_utc_suffix_origin(self, dataset_dir, small_config, tiny_city):
        """A manifest origin ending in Z ingests like its naive twin"""
        path = dataset_dir / MANIFEST_NAME
        manifest = json.loads(path.read_text())
        manifest["time_origin"] = manifest["time_origin"].split("+")[0].rstrip("Z") + "Z"
        path.write_text(json.dumps(manifest))
        assert load_manifest(dataset_dir).time_origin.tzinfo is None
        dataset = ingest_dataset(dataset_dir, small_config)
        np.testing.assert_array_equal(dataset.risk.values, compute_risk_scores(tiny_city.events, 9, 60).values)

    def test_manifest_not_json(self, tmp_path):
        """Invalid manifest JSON is located by line"""
        _write(tmp_path / MANIFEST_NAME, "{\n  nope\n}")
        with pytest.raises(DataError, match="line 2"):
            load_manifest(tmp_path)

    def test_risk_matches_events(self, small_dataset, tiny_city):
        """Ingested risk equals the planted events"""
        expected = compute_risk_scores(tiny_city.events, 9, 60).values
        np.testing.assert_array_equal(small_dataset.risk.values, expected)

    def test_shapes(self, small_dataset):
        """Aligned array shapes"""
        assert small_dataset.region_ids[0] == "r000"
        assert small_dataset.adjacency.shape == (9, 9)
        np.testing.assert_array_equal(small_dataset.adjacency, small_dataset.adjacency.T)
        assert small_dataset.poi.shape == (9, 4)
        assert small_dataset.road.shape == (9, 3)
        assert small_dataset.met.shape == (60, 3)
        assert small_dataset.cal.shape == (60, 9)

    def test_region_count_mismatch(self, dataset_dir, small_config):
        """Manifest region count must match the catalog"""
        path = dataset_dir / MANIFEST_NAME
        manifest = json.loads(path.read_text())
        manifest["n_regions"] = 10
        path.write_text(json.dumps(manifest))
        with pytest.raises(DataError, match="declares 10 regions"):
            ingest_dataset(dataset_dir, small_config)

    def test_prepared_round_trip(self, small_dataset, tmp_path, small_config):
        """The prepared npz reloads unchanged"""
        path = save_prepared(small_dataset, tmp_path / "dataset.npz")
        again = load_prepared(path)
        np.testing.assert_array_equal(again.risk.values, small_dataset.risk.values)
        np.testing.assert_array_equal(again.met, small_dataset.met)
        assert again.region_ids == small_dataset.region_ids
        assert again.time_origin == small_dataset.time_origin
        assert open_dataset(small_config, path).n_regions == 9

    def test_generated_holidays_when_file_absent(self, tmp_path, tiny_city, small_config):
        """Without holidays.csv the calendar comes from the package"""
        write_city(tiny_city, tmp_path / "nohol", with_holidays=False)
        dataset = ingest_dataset(tmp_path / "nohol", small_config)
        assert any("holidays generated" in note for note in dataset.issues.notes)
        # 2021-01-01 is a public holiday
        assert dataset.cal[0, dataset.cal_columns.index("holiday")] == 1

    def test_unknown_dataset_path(self, tmp_path, small_config):
        """Unsupported dataset paths are data errors"""
        with pytest.raises(DataError):
            open_dataset(small_config, tmp_path / "data.parquet")


# ------------------------- Loader totality -------------------------

FUZZ_PIECES = [
    "r3", "r9", "zz", "", " ", "2021-02-03T04:05:06", "2021-13-40", "2021-01-01Z", "2021-01-01T00:00:00+05:00",
    "-3409", "99999-01-01", "0001-01-01", "slight", "fatal", "2", "7", "nan", "1e309", "-", ":", "'", '"', "T", "é",
]


def _fuzz_line(rng) -> str:
    fields = []
    for _ in range(int(rng.integers(1, 5))):
        if rng.random() < 0.7:
            fields.append(FUZZ_PIECES[int(rng.integers(len(FUZZ_PIECES)))])
        else:
            alphabet = "0123456789-:T.,' Zr"
            fields.append("".join(alphabet[int(i)] for i in rng.integers(len(alphabet), size=int(rng.integers(0, 12)))))
    return ",".join(fields)


class TestLoaderTotality:
    """Every input line either parses or yields a located DataError"""

    def _check(self, loader, path):
        try:
            loader(path)
        except HyperRiskError as exc:
            assert isinstance(exc, DataError)
            assert exc.path == str(path)
            assert exc.line in (None, 1, 2)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_fuzzed_lines(self, tmp_path, catalog, seed):
        """Seeded random rows through the region, accident and weather loaders"""
        rng = np.random.default_rng(seed)
        loaders = {
            "region_id": load_regions,
            "region_id,timestamp,severity": lambda p: load_accidents(p, catalog, ORIGIN, 24, n_steps=100),
            "timestamp,temperature": read_weather,
        }
        for n in range(300):
            for i, (header, loader) in enumerate(loaders.items()):
                path = _write(tmp_path / f"fuzz_{i}.csv", f"{header}\n{_fuzz_line(rng)}\n")
                self._check(loader, path)

    def test_out_of_range_year_located(self, tmp_path, catalog):
        """A timestamp past the datetime range is reported with its line"""
        text = "region_id,timestamp,severity\nr0,2021-01-01,1\nr0,99999-01-01,1\n"
        with pytest.raises(DataError, match="line 3:column 'timestamp'"):
            load_accidents(_write(tmp_path / "a.csv", text), catalog, ORIGIN, 24)

    def test_short_row(self, tmp_path, catalog):
        """Missing trailing fields are a located error, not a crash"""
        text = "region_id,timestamp,severity\nr0,2021-01-01\n"
        with pytest.raises(DataError, match="line 2"):
            load_accidents(_write(tmp_path / "a.csv", text), catalog, ORIGIN, 24)


class TestSourceRoundTrip:
    """Parsed sources written back reparse to the same dataset"""

    def test_parse_write_parse(self, dataset_dir, tmp_path, small_config):
        """ingest -> write_city -> ingest keeps every aligned array"""
        manifest = load_manifest(dataset_dir)
        catalog, _ = load_adjacency(manifest.resolve("adjacency"), load_regions(manifest.resolve("regions")))
        events, _ = load_accidents(
            manifest.resolve("accidents"), catalog, manifest.time_origin, manifest.interval_hours, manifest.n_steps
        )
        hourly, _ = read_weather(manifest.resolve("weather"))
        rows, cols = np.nonzero(np.triu(catalog.adjacency))
        city = SyntheticCity(
            region_ids=catalog.region_ids,
            events=events,
            event_times=[manifest.time_origin + timedelta(hours=manifest.interval_hours * e.time_index) for e in events],
            edges=[(catalog.region_ids[i], catalog.region_ids[j]) for i, j in zip(rows, cols)],
            poi=read_table(manifest.resolve("poi"), ["region_id"]),
            road=read_table(manifest.resolve("road"), ["region_id"]),
            weather=hourly.rename_axis("timestamp").reset_index(),
            holidays=sorted(read_holidays(manifest.resolve("holidays"))),
            origin=manifest.time_origin,
            interval_hours=manifest.interval_hours,
            n_steps=manifest.n_steps,
        )
        write_city(city, tmp_path / "again")

        first = ingest_dataset(dataset_dir, small_config)
        second = ingest_dataset(tmp_path / "again", small_config)
        assert second.region_ids == first.region_ids
        assert second.time_origin == first.time_origin
        np.testing.assert_array_equal(second.risk.values, first.risk.values)
        np.testing.assert_array_equal(second.adjacency, first.adjacency)
        np.testing.assert_allclose(second.poi, first.poi)
        np.testing.assert_allclose(second.road, first.road)
        np.testing.assert_allclose(second.met, first.met)
        np.testing.assert_array_equal(second.cal, first.cal)
