import numpy as np
import pytest

from ptgan import data as dmod
from ptgan.data import (
    ColumnSpec,
    MixtureSpec,
    TabularSchema,
    decode_tabular,
    load_tabular,
    sample_mixture,
    split,
)


def test_ring8_preset_geometry():
    spec = dmod.ring8_spec()
    assert spec.centers.shape == (8, 2)
    radii = np.linalg.norm(spec.centers, axis=1)
    assert np.allclose(radii, 1.5)
    assert spec.sigma == 0.1


def test_two1d_presets():
    assert np.array_equal(dmod.two1d_spec().centers, [[-1.5], [1.5]])
    assert np.array_equal(dmod.PRESETS["two1d_wide"]().centers, [[-3.0], [3.0]])


def test_sample_mixture_zero_noise_limit():
    spec = MixtureSpec(np.array([[2.0, 0.0]]), sigma=1e-12)
    out = sample_mixture(spec, 100, np.random.default_rng(0))
    assert np.allclose(out, [2.0, 0.0], atol=1e-9)


def test_sample_mixture_weights_frequencies():
    spec = MixtureSpec(np.array([[0.0], [10.0]]), sigma=0.01,
                       weights=np.array([0.3, 0.7]))
    out = sample_mixture(spec, 100_000, np.random.default_rng(1))
    frac_hi = np.mean(out > 5.0)
    se = np.sqrt(0.3 * 0.7 / 100_000)
    assert abs(frac_hi - 0.7) < 4 * se


def test_sample_mixture_deterministic():
    spec = dmod.ring8_spec()
    a = sample_mixture(spec, 50, np.random.default_rng(7))
    b = sample_mixture(spec, 50, np.random.default_rng(7))
    assert np.array_equal(a, b)


def test_mixture_spec_validation():
    with pytest.raises(ValueError):
        MixtureSpec(np.zeros((2, 1)), sigma=0.0)
    with pytest.raises(ValueError):
        MixtureSpec(np.zeros((2, 1)), sigma=1.0, weights=np.array([0.5, 0.6]))


def test_split_sizes_and_determinism():
    m = np.arange(200).reshape(100, 2)
    train, test = split(m, 0.9, seed=3)
    assert train.shape == (90, 2) and test.shape == (10, 2)
    train2, test2 = split(m, 0.9, seed=3)
    assert np.array_equal(train, train2) and np.array_equal(test, test2)


def test_split_union_is_input():
    m = np.arange(30).reshape(15, 2)
    train, test = split(m, 0.4, seed=1)
    merged = np.vstack([train, test])
    assert sorted(map(tuple, merged)) == sorted(map(tuple, m))


def test_split_fraction_validation():
    with pytest.raises(ValueError):
        split(np.zeros((4, 1)), 1.0, seed=0)


def simple_schema():
    return TabularSchema(
        columns=[
            ColumnSpec("x", "continuous"),
            ColumnSpec("grp", "categorical", ["a", "b"]),
        ],
        sensitive=None,
        label=None,
    )


def write_csv(tmp_path, text, name="t.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_tabular_minmax_example(tmp_path):
    p = write_csv(tmp_path, "x,grp\n0,a\n5,b\n10,a\n")
    matrix, meta = load_tabular(p, simple_schema())
    assert np.allclose(matrix[:, 0], [-1.0, 0.0, 1.0], atol=0)
    assert np.array_equal(matrix[:, 1:], [[1, 0], [0, 1], [1, 0]])


def test_load_tabular_roundtrip(tmp_path):
    p = write_csv(tmp_path, "x,grp\n1.25,a\n-3.5,b\n7.75,b\n0.0,a\n")
    matrix, meta = load_tabular(p, simple_schema())
    cols = decode_tabular(matrix, meta)
    assert np.allclose(cols["x"], [1.25, -3.5, 7.75, 0.0], atol=1e-12)
    assert list(cols["grp"]) == ["a", "b", "b", "a"]


def test_load_tabular_constant_column_maps_to_zero(tmp_path):
    p = write_csv(tmp_path, "x,grp\n4,a\n4,b\n")
    matrix, meta = load_tabular(p, simple_schema())
    assert np.all(matrix[:, 0] == 0.0)
    cols = decode_tabular(matrix, meta)
    assert np.allclose(cols["x"], 4.0)


def test_load_tabular_error_locations(tmp_path):
    p = write_csv(tmp_path, "x,grp\n1,a\nbad,b\n")
    with pytest.raises(ValueError, match=r"row 3.*'x'.*non-numeric|row 3.*non-numeric"):
        load_tabular(p, simple_schema())
    p2 = write_csv(tmp_path, "x,grp\n1,a\n2,zzz\n", name="t2.csv")
    with pytest.raises(ValueError, match=r"row 3.*unknown level 'zzz'"):
        load_tabular(p2, simple_schema())
    p3 = write_csv(tmp_path, "y,grp\n1,a\n", name="t3.csv")
    with pytest.raises(ValueError, match="missing column 'x'"):
        load_tabular(p3, simple_schema())


def test_schema_validation():
    with pytest.raises(ValueError, match="duplicate"):
        TabularSchema([ColumnSpec("x", "continuous"),
                       ColumnSpec("x", "continuous")])
    with pytest.raises(ValueError, match="not declared"):
        TabularSchema([ColumnSpec("x", "continuous")], sensitive="a")
    with pytest.raises(ValueError, match="levels"):
        ColumnSpec("g", "categorical", [])
    with pytest.raises(ValueError, match="unknown keys"):
        TabularSchema.from_dict({"columns": [], "bogus": 1})


def test_schema_presets_resolve():
    for name, schema in dmod.SCHEMA_PRESETS.items():
        assert schema.sensitive is not None
        assert schema.label is not None
        assert schema.column(schema.sensitive).kind == "categorical"


def test_positive_level_column():
    schema = TabularSchema(
        columns=[
            ColumnSpec("c", "continuous"),
            ColumnSpec("a", "categorical", ["0", "1"]),
        ],
        sensitive="a",
    )
    raw = {"c": [0.0, 1.0], "a": ["0", "1"]}
    matrix, meta = dmod.encode_tabular(raw, schema)
    j = meta.positive_level_column("a")
    assert np.array_equal(matrix[:, j], [0.0, 1.0])


def test_write_csv_roundtrip(tmp_path):
    cols = {"x": [1.5, 2.5], "g": ["a", "b"]}
    p = tmp_path / "out.csv"
    dmod.write_csv(p, cols, ["x", "g"])
    text = p.read_text().strip().splitlines()
    assert text[0] == "x,g"
    assert text[1] == "1.5,a"
