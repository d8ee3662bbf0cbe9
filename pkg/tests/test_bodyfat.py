import os

import numpy as np
import pytest

from plsivc.bodyfat import (
    COLUMNS,
    CleaningRules,
    choose_anchor,
    linear_baseline_r2,
    load_bodyfat,
    read_bodyfat_table,
    siri_consistency,
)
from plsivc.errors import DataError, SchemaError

DATA = os.path.join(os.path.dirname(__file__), "..", "data", "bodyfat.csv")


class TestSiriConsistency:
    def test_exact_siri_point(self):
        assert siri_consistency(1.10, 495 / 1.10 - 450) == pytest.approx(0.0)

    def test_offset(self):
        base = 495 / 1.10 - 450
        assert siri_consistency(1.10, base - 5.0) == pytest.approx(5.0)

    def test_small_gap(self):
        assert siri_consistency(0.995, 47.5) == pytest.approx(
            abs(495 / 0.995 - 450 - 47.5))

    def test_bad_density(self):
        with pytest.raises(DataError):
            siri_consistency(0.0, 10.0)


class TestLoadBodyfat:
    def test_source_has_252_rows(self):
        table = read_bodyfat_table(DATA)
        assert table["bodyfat"].size == 252

    def test_cleaning_retains_246(self):
        data, report, meta = load_bodyfat(DATA)
        assert report.total == 252
        assert report.retained == 246
        assert data.n == 246
        reasons = sorted(e["reason"] for e in report.excluded)
        assert reasons.count("type error") == 3
        assert reasons.count("siri inconsistency") == 3

    def test_blocks_and_names(self):
        data, report, meta = load_bodyfat(DATA)
        assert (data.d, data.p, data.q) == (2, 10, 2)
        assert meta["x_names"][2] == "abdomen"
        np.testing.assert_array_equal(data.z[:, 0], 1.0)

    def test_log_response(self):
        data, report, meta = load_bodyfat(DATA, standardize_x=False)
        table = read_bodyfat_table(DATA)
        keep = np.ones(252, dtype=bool)
        for e in report.excluded:
            keep[e["row"] - 1] = False
        np.testing.assert_allclose(data.y, np.log(table["bodyfat"][keep]))

    def test_standardization_recorded(self):
        data, report, meta = load_bodyfat(DATA, standardize_x=True)
        assert meta["standardize_x"]
        np.testing.assert_allclose(data.x.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(data.x.std(axis=0), 1.0, atol=1e-12)

    def test_idempotent_cleaning(self, tmp_path):
        # write the retained rows back out; re-cleaning excludes nothing
        table = read_bodyfat_table(DATA)
        _, report, _ = load_bodyfat(DATA)
        keep = np.ones(252, dtype=bool)
        for e in report.excluded:
            keep[e["row"] - 1] = False
        path = tmp_path / "clean.csv"
        with open(path, "w") as fh:
            fh.write(",".join(COLUMNS) + "\n")
            for i in np.nonzero(keep)[0]:
                fh.write(",".join(f"{table[c][i]:.17g}" for c in COLUMNS) + "\n")
        data2, report2, _ = load_bodyfat(path)
        assert report2.retained == 246
        assert not report2.excluded

    def test_missing_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("density,bodyfat\n1.05,20\n")
        with pytest.raises(SchemaError, match="missing column"):
            load_bodyfat(path)

    def test_too_few_rows(self, tmp_path):
        table = read_bodyfat_table(DATA)
        path = tmp_path / "tiny.csv"
        with open(path, "w") as fh:
            fh.write(",".join(COLUMNS) + "\n")
            for i in range(20):
                fh.write(",".join(f"{table[c][i]:.17g}" for c in COLUMNS) + "\n")
        with pytest.raises(DataError, match="clean rows"):
            load_bodyfat(path)

    def test_configurable_rules(self):
        rules = CleaningRules(min_bodyfat=0.0, min_height=0.0,
                              siri_tolerance=np.inf)
        data, report, _ = load_bodyfat(DATA, rules=rules)
        # bodyfat == 0 still dies: the log response must exist
        assert report.retained == 251


class TestBaselines:
    def test_lm_baseline_level(self):
        table = read_bodyfat_table(DATA)
        _, report, _ = load_bodyfat(DATA)
        keep = np.ones(252, dtype=bool)
        for e in report.excluded:
            keep[e["row"] - 1] = False
        r2 = linear_baseline_r2({c: v[keep] for c, v in table.items()})
        assert 0.55 < r2 < 0.75

    def test_anchor_is_abdomen(self):
        data, _, meta = load_bodyfat(DATA)
        assert meta["x_names"][choose_anchor(data)] == "abdomen"
