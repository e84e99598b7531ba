import json

import numpy as np
import pytest

from predsens import data
from predsens.data import BINARY, CONTINUOUS, ONEHOT, TableFormat
from predsens.errors import DataError

# Counted with a standalone csv-module script over the official UCI files.
ADULT_TRAIN_ROWS = 32561
ADULT_TRAIN_KEPT = 30162
ADULT_TEST_KEPT = 15060
ADULT_OCCUPATIONS = 14

TOY_FORMAT = TableFormat(columns=("age", "color", "sex", "label"), label_column="label", comment_prefix=None,
                         continuous=("age",))

TOY = """\
30, red, M, yes
40, blue, F, no
50, green, M, yes
?, red, F, no
60, red, F, yes
"""


@pytest.fixture
def toy(tmp_path):
    p = tmp_path / "toy.csv"
    p.write_text(TOY)
    table = data.load_csv(p, TOY_FORMAT)
    schema = data.fit_schema(table, "sex", "M", "yes", TOY_FORMAT)
    return table, schema


def test_toy_load_drops_missing_in_order(toy):
    table, _ = toy
    assert table.dropped == 1
    assert [r[0] for r in table.rows] == ["30", "40", "50", "60"]
    assert table.line_numbers == [1, 2, 3, 5]


def test_arity_error_reports_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n")
    with pytest.raises(DataError, match="line 1"):
        data.load_csv(p)


def test_empty_file(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("")
    with pytest.raises(DataError, match="no data rows"):
        data.load_csv(p)


def test_unreadable_file(tmp_path):
    with pytest.raises(DataError, match="cannot read"):
        data.load_csv(tmp_path / "nope.csv")


def test_header_mode(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("x,grp,y\n1.5,a,1\n2.5,b,0\n")
    fmt = TableFormat(columns=None, header=True, label_column="y", continuous=None, comment_prefix=None)
    table = data.load_csv(p, fmt)
    assert table.columns == ["x", "grp", "y"]
    schema = data.fit_schema(table, "grp", "a", "1", fmt)
    assert [g.kind for g in schema.groups] == [CONTINUOUS, BINARY]
    ds = data.encode(table, schema, fmt)
    assert ds.labels.tolist() == [1, 0]


def test_toy_schema_layout(toy):
    _, schema = toy
    assert [(g.name, g.kind, g.start, g.end) for g in schema.groups] == [
        ("age", CONTINUOUS, 0, 1), ("color", ONEHOT, 1, 4), ("sex", BINARY, 4, 5)]
    assert schema.group("sex").categories == ("F", "M")
    assert schema.width == 5


def test_toy_encoding(toy):
    table, schema = toy
    ds = data.encode(table, schema, TOY_FORMAT)
    assert ds.features[:, 4].tolist() == [1.0, 0.0, 1.0, 0.0]
    assert np.all(ds.features[:, 1:4].sum(axis=1) == 1.0)
    assert ds.labels.tolist() == [1, 0, 1, 1]
    assert abs(ds.features[:, 0].mean()) < 1e-9
    assert ds.features[:, 0].std() == pytest.approx(1.0, abs=1e-6)


def test_unknown_privileged_value(toy):
    table, _ = toy
    with pytest.raises(DataError, match="Martian"):
        data.fit_schema(table, "sex", "Martian", "yes", TOY_FORMAT)


def test_constant_continuous_column(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("5, red, M, yes\n5, blue, F, no\n")
    table = data.load_csv(p, TOY_FORMAT)
    with pytest.raises(DataError, match="'age'.*constant"):
        data.fit_schema(table, "sex", "M", "yes", TOY_FORMAT)


def test_out_of_vocabulary(toy, tmp_path):
    _, schema = toy
    p = tmp_path / "t.csv"
    p.write_text("30, red, M, yes\n31, purple, F, no\n")
    with pytest.raises(DataError, match=r"'color'.*'purple'.*line 2"):
        data.encode(data.load_csv(p, TOY_FORMAT), schema, TOY_FORMAT)


def test_schema_json_roundtrip_and_fingerprint(toy):
    _, schema = toy
    again = data.FeatureSchema.from_json(schema.to_json())
    assert again == schema
    assert again.fingerprint() == schema.fingerprint()
    keys = set(json.loads(schema.to_json()))
    assert keys == {"version", "groups", "protected", "privileged_value", "label_column", "label_positive"}


def test_schema_rejects_gapped_spans():
    g = (data.FeatureGroup("a", CONTINUOUS, 0, 1, None, 0.0, 1.0), data.FeatureGroup("s", BINARY, 2, 3, ("F", "M")))
    with pytest.raises(DataError):
        data.FeatureSchema(g, "s", "M", "y", "1")


def test_split_sizes_and_determinism():
    ds = data.EncodedDataset(np.arange(10.0)[:, None], np.zeros(10, dtype=np.int8), None)
    a, b = data.split(ds, 0.8, seed=3)
    assert (len(a), len(b)) == (8, 2)
    assert not set(a.features[:, 0]) & set(b.features[:, 0])
    a2, b2 = data.split(ds, 0.8, seed=3)
    assert np.array_equal(a.features, a2.features) and np.array_equal(b.features, b2.features)


@pytest.mark.parametrize("fraction", [0.0, 1.0, 1.5])
def test_split_rejects_degenerate_fraction(fraction):
    ds = data.EncodedDataset(np.zeros((10, 1)), np.zeros(10, dtype=np.int8), None)
    with pytest.raises(DataError):
        data.split(ds, fraction, seed=0)


# Adult

def test_adult_row_counts(adult):
    assert len(adult["train_table"]) == ADULT_TRAIN_KEPT
    assert adult["train_table"].dropped == ADULT_TRAIN_ROWS - ADULT_TRAIN_KEPT
    assert len(adult["test_table"]) == ADULT_TEST_KEPT


def test_adult_schema(adult):
    schema = adult["schema"]
    assert len(schema.groups) == 14
    sex = schema.group("sex")
    assert sex.kind == BINARY and sex.width == 1 and sex.categories[1] == "Male"
    occ = schema.group("occupation")
    assert occ.kind == ONEHOT and occ.width == ADULT_OCCUPATIONS


def test_adult_female_encodes_to_zero(adult):
    table, ds = adult["train_table"], adult["train"]
    j = table.columns.index("sex")
    col = ds.schema.group("sex").start
    for i in range(200):
        assert ds.features[i, col] == (1.0 if table.rows[i][j] == "Male" else 0.0)


def test_adult_encoded_invariants(adult):
    ds = adult["train"]
    for g in ds.schema.groups:
        block = ds.features[:, g.start:g.end]
        if g.kind == ONEHOT:
            assert np.all(block.sum(axis=1) == 1.0)
        elif g.kind == BINARY:
            assert set(np.unique(block)) <= {0.0, 1.0}
        else:
            assert abs(block.mean()) < 1e-9
            assert abs(block.std() - 1.0) < 1e-6


def test_adult_test_labels_normalized(adult):
    # The official test file writes ">50K." ; both splits must have positives.
    assert 0 < adult["test"].labels.mean() < 0.5
    assert 0 < adult["train"].labels.mean() < 0.5


def test_adult_test_uses_train_statistics(adult):
    schema = adult["schema"]
    before = schema.to_json()
    data.encode(adult["test_table"], schema)
    assert schema.to_json() == before
    age = schema.group("age")
    raw = np.array([float(r[0]) for r in adult["test_table"].rows])
    np.testing.assert_allclose(adult["test"].features[:, age.start], (raw - age.mean) / age.std)


def test_adult_categorical_roundtrip(adult):
    table, ds = adult["test_table"], adult["test"]
    for i in range(100):
        for g in ds.schema.groups:
            if g.kind == CONTINUOUS:
                continue
            j = table.columns.index(g.name)
            assert ds.schema.decode(g.name, ds.features[i]) == table.rows[i][j]
