import json

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from yoco import ObservationSet, compress_suffstats, errors, gen_panel
from yoco.io import JobConfig, dumps_json, read_csv, read_suffstats, write_csv, write_suffstats


def cfg(path, features=("x",), outcomes=("y",), **kw):
    kw.setdefault("intercept", False)
    return JobConfig(input=path, features=tuple(features), outcomes=tuple(outcomes), **kw)


def assert_tables_identical(a, b):
    assert a.feature_names == b.feature_names and a.outcome_names == b.outcome_names
    for name in ("features", "y_sum", "y_sq_sum", "count"):
        x, y = getattr(a, name), getattr(b, name)
        assert x.dtype == y.dtype and x.tobytes() == y.tobytes(), name
    assert (a.weighted is None) == (b.weighted is None)
    if a.weighted is not None:
        for x, y in zip(vars(a.weighted).values(), vars(b.weighted).values()):
            assert x.tobytes() == y.tobytes()
        assert a.weight_kind is b.weight_kind
    if a.clusters is not None:
        assert [a.cluster_labels[c] for c in a.clusters] == [b.cluster_labels[c] for c in b.clusters]


class TestReadCsv:
    def test_header_only(self, tmp_path):
        p = tmp_path / "h.csv"
        p.write_text("x,y\n")
        obs = read_csv(p, cfg(p))
        assert obs.n == 0 and obs.p == 1

    def test_non_numeric_token_reports_line(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("x,y\n1,2\nabc,3\n")
        with pytest.raises(errors.ParseError) as exc:
            read_csv(p, cfg(p))
        assert exc.value.line == 3 and exc.value.column == "x"

    def test_missing_column(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("x,y\n1,2\n")
        with pytest.raises(errors.MissingColumn):
            read_csv(p, cfg(p, features=("x", "z")))

    def test_overlapping_roles(self, tmp_path):
        p = tmp_path / "o.csv"
        p.write_text("x,y\n1,2\n")
        with pytest.raises(errors.ValidationError):
            read_csv(p, cfg(p, features=("x", "y")))

    def test_three_row_fixture(self, tmp_path):
        p = tmp_path / "f.csv"
        p.write_text('x,y,w,g\n1,2.5,1,"a,b"\n2,-1,2,c\n1,0.125,3,"a,b"\n')
        obs = read_csv(p, cfg(p, weight_col="w", weight_kind="frequency", cluster_col="g"))
        ref = ObservationSet.from_arrays([[1.0], [2.0], [1.0]], [[2.5], [-1.0], [0.125]], ("x",),
                                         ("y",), weights=[1, 2, 3], weight_kind="frequency",
                                         clusters=["a,b", "c", "a,b"])
        assert_array_equal(obs.features, ref.features)
        assert_array_equal(obs.outcomes, ref.outcomes)
        assert_array_equal(obs.weights, ref.weights)
        assert obs.weight_kind is ref.weight_kind
        assert_array_equal(obs.clusters, ref.clusters)
        assert obs.cluster_labels == ref.cluster_labels

    def test_intercept_added_by_default(self, tmp_path):
        p = tmp_path / "i.csv"
        p.write_text("x,y\n1,2\n")
        assert read_csv(p, cfg(p, intercept=True)).feature_names == ("intercept", "x")

    def test_write_then_read(self, tmp_path, rng):
        obs = ObservationSet.from_arrays(rng.normal(size=(5, 2)), rng.normal(size=(5, 1)), ("a", "b"),
                                         ("y",), clusters=list("ppqqr"))
        p = tmp_path / "rt.csv"
        write_csv(obs, p, cluster_col="grp")
        back = read_csv(p, cfg(p, features=("a", "b"), cluster_col="grp"))
        assert back.features.tobytes() == obs.features.tobytes()
        assert back.outcomes.tobytes() == obs.outcomes.tobytes()
        assert back.cluster_labels == obs.cluster_labels


class TestSuffstatsFile:
    def test_tiny_table_round_trip(self, tmp_path):
        # (d)-shaped: two features, one outcome, irrational-looking sums
        X = np.array([[0.0, 1.0], [0.0, 1.0], [1.0, 0.1], [1.0, 1.0], [1.0, 0.1]])
        y = np.array([[1 / 3], [2 / 7], [np.pi], [-1e-300], [1e150]])
        t = compress_suffstats(ObservationSet.from_arrays(X, y, ("treat", "dose"), ("y",)))
        p = tmp_path / "t.csv"
        write_suffstats(t, p)
        assert p.read_text().splitlines()[0] == "treat,dose,y__sum,y__sumsq,__count"
        assert_tables_identical(read_suffstats(p), t)

    def test_weighted_clustered_round_trip(self, tmp_path, rng):
        X = rng.integers(0, 2, size=(30, 2)).astype(float)
        obs = ObservationSet.from_arrays(X, rng.normal(size=(30, 2)), weights=rng.uniform(0.1, 5, 30),
                                         weight_kind="analytic", clusters=rng.integers(0, 4, 30))
        t = compress_suffstats(obs, include_cluster_key=True)
        p = tmp_path / "w.csv"
        write_suffstats(t, p)
        assert_tables_identical(read_suffstats(p), t)

    def test_empty_table_is_header_only(self, tmp_path):
        t = compress_suffstats(ObservationSet.from_arrays(np.zeros((0, 1)), np.zeros((0, 1)), ("x",), ("y",)))
        p = tmp_path / "e.csv"
        write_suffstats(t, p)
        assert p.read_text() == "x,y__sum,y__sumsq,__count\n"
        assert read_suffstats(p).G == 0

    def test_missing_count_column(self, tmp_path):
        p = tmp_path / "nc.csv"
        p.write_text("x,y__sum,y__sumsq\n1,2,4\n")
        with pytest.raises(errors.SchemaMismatch):
            read_suffstats(p)

    def test_garbled_layout(self, tmp_path):
        p = tmp_path / "g.csv"
        p.write_text("x,y__sumsq,y__sum,__count\n1,2,4,1\n")
        with pytest.raises(errors.SchemaMismatch):
            read_suffstats(p)


class TestJson:
    def test_float_format_and_order(self):
        text = dumps_json({"b": 0.1, "a": [1, None, True], "c": float("nan")})
        assert text == '{"b": 0.10000000000000001, "a": [1, null, true], "c": null}'
        assert json.loads(text)["b"] == 0.1

    def test_numpy_scalars(self):
        assert dumps_json({"n": np.int64(3), "x": np.float64(2.5)}) == '{"n": 3, "x": 2.5}'


class TestGenPanel:
    def test_shape(self):
        obs = gen_panel(2, 3, seed=1)
        assert obs.n == 6 and obs.C == 2
        assert_array_equal(np.bincount(obs.clusters), [3, 3])
        assert_array_equal(obs.column("t"), [1, 2, 3, 1, 2, 3])

    def test_deterministic_bytes(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_csv(gen_panel(20, 4, seed=9), a)
        write_csv(gen_panel(20, 4, seed=9), b)
        assert a.read_bytes() == b.read_bytes()

    def test_group_count_bounds(self):
        obs = gen_panel(1000, 10, p_static=2, seed=3)
        keyed = compress_suffstats(obs, include_cluster_key=True)
        unique_rows = len(np.unique(np.c_[obs.clusters, obs.features], axis=0))
        assert keyed.G == unique_rows == 1000 * 10
        assert compress_suffstats(obs).G == 4 * 10

    def test_metadata_records_coefficients(self):
        meta = gen_panel(3, 2, p_static=3).metadata
        assert set(meta["coefficients"]) == {"intercept", "s1", "s2", "s3", "t"}
