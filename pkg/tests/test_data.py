import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from emufleet.data import (
    COLUMNS,
    INDEX_NAMES,
    NormalizationSpec,
    NormPolicy,
    YearRecord,
    assemble_feature_map,
    bundled_dataset_path,
    denormalize,
    fit_normalization,
    load_dataset,
    normalize,
    save_dataset,
    training_records,
)
from emufleet.errors import DegenerateRangeError, ParseError, ValidationError

HEADER = ",".join(COLUMNS) + "\n"
FLEET = NormalizationSpec((0.0,) * 9, (1.0,) * 9, 105.0, 2206.0)


class TestLoad:
    def test_row_2007(self):
        rec = load_dataset((HEADER + "2007,105,0,78,0,0,1356700,721.63,27023.23,14908.61,44243\n").encode())[0]
        assert rec.year == 2007
        assert rec.fleet_size == 105
        assert rec["hsr_km"] == 0
        assert rec["rail_km"] == 78
        assert rec["rail_pass"] == 1356700
        assert rec["coaches"] == 44243

    def test_row_without_fleet_size(self):
        text = HEADER + "2020,,31.92,152.4,2537595,1033.39,3558791,1500.09,92950.85,41222.96,90878.46\n"
        rec = load_dataset(text.encode())[0]
        assert rec.fleet_size is None
        assert rec["gdp"] == 92950.85

    def test_bundled(self, records):
        assert [r.year for r in records] == list(range(2007, 2021))
        assert all(r.fleet_size is not None for r in records if r.year <= 2015)
        assert all(r.fleet_size is None for r in records if r.year >= 2016)
        assert [r.fleet_size for r in training_records(records)] == [
            105, 176, 285, 551, 849, 1083, 1308, 1712, 2206]

    def test_repo_copy_matches_package_copy(self):
        from pathlib import Path

        repo_copy = Path(__file__).resolve().parents[1] / "data" / "emu.csv"
        assert repo_copy.read_bytes() == bundled_dataset_path().read_bytes()

    def test_accepts_path_and_streams(self, tmp_path):
        raw = bundled_dataset_path().read_bytes()
        p = tmp_path / "d.csv"
        p.write_bytes(raw)
        a = load_dataset(p)
        assert load_dataset(io.BytesIO(raw)) == a
        assert load_dataset(io.StringIO(raw.decode())) == a

    @pytest.mark.parametrize("text", [b"", b"\n"])
    def test_empty_file(self, text):
        with pytest.raises(ParseError):
            load_dataset(text)

    def test_bad_header(self):
        with pytest.raises(ParseError, match="line 1"):
            load_dataset(b"year,fleet\n2007,105\n")

    def test_malformed_row_names_line(self):
        text = HEADER + "2007,105,0,78,0,0,1356700,721.63,27023.23,14908.61,44243\n2008,176,abc,1,1,1,1,1,1,1,1\n"
        with pytest.raises(ParseError, match="line 3"):
            load_dataset(text.encode())

    def test_short_row(self):
        with pytest.raises(ParseError, match="line 2"):
            load_dataset((HEADER + "2007,105,0\n").encode())

    def test_duplicate_year(self):
        row = "2007,105,0,78,0,0,1356700,721.63,27023.23,14908.61,44243\n"
        with pytest.raises(ValidationError, match="duplicate"):
            load_dataset((HEADER + row + row).encode())

    def test_negative_index(self):
        with pytest.raises(ValidationError, match="negative"):
            load_dataset((HEADER + "2007,105,-1,78,0,0,1356700,721.63,27023.23,14908.61,44243\n").encode())

    def test_unsorted(self):
        rows = ("2008,176,0.67,79.7,7340,1.56,1461930,777.86,31951.55,17067.78,45076\n"
                "2007,105,0,78,0,0,1356700,721.63,27023.23,14908.61,44243\n")
        with pytest.raises(ValidationError, match="sorted"):
            load_dataset((HEADER + rows).encode())

    def test_save_load_round_trip(self, records):
        text = save_dataset(records)
        assert load_dataset(text.encode()) == records
        # bundled file is itself in canonical form
        assert text.encode() == bundled_dataset_path().read_bytes()

    @given(st.lists(st.floats(0, 1e9, allow_nan=False), min_size=9, max_size=9),
           st.one_of(st.none(), st.integers(1, 10**6)))
    def test_round_trip_arbitrary_values(self, values, fleet):
        rec = YearRecord(2000, tuple(values), fleet)
        assert load_dataset(save_dataset([rec]).encode()) == [rec]


class TestNormalization:
    def test_gdp_range_all_years(self, spec_all):
        assert spec_all.bounds("gdp") == (27023.23, 92950.85)

    def test_gdp_range_train_years(self, spec_train):
        assert spec_train.bounds("gdp") == (27023.23, 68550.58)

    @pytest.mark.parametrize("policy", ["all-years", "train-years"])
    def test_target_range(self, records, policy):
        spec = fit_normalization(records, policy)
        assert spec.bounds("fleet_size") == (105, 2206)
        assert spec.policy is NormPolicy(policy)

    def test_default_policy_is_train_years(self, records):
        assert fit_normalization(records).policy is NormPolicy.TRAIN_YEARS

    def test_identical_records_degenerate(self, records):
        with pytest.raises(DegenerateRangeError):
            fit_normalization([records[0], records[0]])

    def test_too_few_records(self, records):
        with pytest.raises(ValidationError):
            fit_normalization(records[:1])

    def test_unknown_policy(self, records):
        with pytest.raises(ValidationError):
            fit_normalization(records, "everything")

    def test_endpoints_and_value(self):
        assert normalize(105, "fleet_size", FLEET) == 0
        assert normalize(2206, "fleet_size", FLEET) == 1
        assert normalize(849, "fleet_size", FLEET) == pytest.approx(744 / 2101, rel=1e-15)
        assert math.isclose(744 / 2101, 0.3541171, rel_tol=1e-7)

    def test_denormalize(self):
        assert denormalize(0, "fleet_size", FLEET) == 105
        assert denormalize(0.5, "fleet_size", FLEET) == 1155.5

    def test_round_trip_every_table_value(self, records, spec_all):
        for r in records:
            for name, v in zip(INDEX_NAMES, r.indices):
                back = denormalize(normalize(v, name, spec_all), name, spec_all)
                assert back == pytest.approx(v, rel=1e-12, abs=1e-12)
            if r.fleet_size:
                assert denormalize(normalize(r.fleet_size, "fleet_size", spec_all), "fleet_size",
                                   spec_all) == pytest.approx(r.fleet_size, rel=1e-12)

    @given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6))
    def test_strictly_increasing(self, a, b):
        a, b = sorted((a, b))
        na, nb = normalize(a, "fleet_size", FLEET), normalize(b, "fleet_size", FLEET)
        assert na <= nb
        # strict once the gap exceeds float resolution of the shifted value
        if b - a > 1e-12 * max(1.0, abs(a), abs(b)):
            assert na < nb

    @given(st.floats(-1e7, 1e7, allow_nan=False))
    def test_inverse_property(self, x):
        back = denormalize(normalize(x, "fleet_size", FLEET), "fleet_size", FLEET)
        assert back == pytest.approx(x, rel=1e-12, abs=1e-9)


class TestFeatureMap:
    def _extreme(self, spec, which):
        vals = spec.feature_min if which == "min" else spec.feature_max
        return YearRecord(2000, vals)

    def test_minima_give_zeros(self, spec_all):
        np.testing.assert_array_equal(assemble_feature_map(self._extreme(spec_all, "min"), spec_all),
                                      np.zeros((3, 3)))

    def test_maxima_give_ones(self, spec_all):
        np.testing.assert_array_equal(assemble_feature_map(self._extreme(spec_all, "max"), spec_all),
                                      np.ones((3, 3)))

    def test_2015_gdp_cell(self, records, spec_all):
        rec = next(r for r in records if r.year == 2015)
        fm = assemble_feature_map(rec, spec_all)
        assert fm.shape == (3, 3)
        assert fm[2, 0] == pytest.approx((68550.58 - 27023.23) / (92950.85 - 27023.23), rel=1e-15)

    def test_layout_is_row_major_column_order(self, spec_all):
        vals = list(spec_all.feature_min)
        for i, name in enumerate(INDEX_NAMES):
            bumped = list(vals)
            bumped[i] = spec_all.feature_max[i]
            fm = assemble_feature_map(YearRecord(2000, bumped), spec_all)
            changed = np.argwhere(fm != 0)
            # each index moves exactly one cell, at its row-major slot
            assert changed.tolist() == [[i // 3, i % 3]], name

    def test_all_years_maps_within_unit_interval(self, records, spec_all):
        for r in records:
            fm = assemble_feature_map(r, spec_all)
            assert fm.min() >= 0 and fm.max() <= 1

    def test_wrong_index_count(self):
        with pytest.raises(ValidationError):
            YearRecord(2000, (1.0,) * 8)
