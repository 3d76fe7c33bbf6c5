import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from guided_rpl.data_io import (
    RunConfig,
    SyntheticSpec,
    generate_synthetic,
    load_model,
    parse_config,
    parse_protocol,
    parse_synthetic_spec,
    read_csv_matrix,
    read_labels,
    read_matrix,
    save_model,
    split_tasks,
    write_labels,
    write_matrix,
)
from guided_rpl.exceptions import BadMagic, IndivisibleSplit, MalformedValue, NonFiniteValue, TruncatedFile, UnknownKey
from guided_rpl.rpl import RplModel, make_rng, project, sample_block


def test_matrix_roundtrip(tmp_path):
    M = np.arange(6.0).reshape(3, 2) / 7
    write_matrix(tmp_path / "m.fmat", M)
    out = read_matrix(tmp_path / "m.fmat")
    assert out.tobytes() == M.tobytes()


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, array_shapes(min_dims=2, max_dims=2, min_side=0, max_side=30),
              elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_matrix_roundtrip_bit_exact(tmp_path_factory, M):
    p = tmp_path_factory.mktemp("m") / "x.fmat"
    write_matrix(p, M)
    assert read_matrix(p).tobytes() == np.ascontiguousarray(M).tobytes()


def test_large_matrix_roundtrip(tmp_path):
    M = np.random.default_rng(0).normal(size=(2500, 4000))
    write_matrix(tmp_path / "big.fmat", M)
    assert np.array_equal(read_matrix(tmp_path / "big.fmat"), M)


@settings(max_examples=40, deadline=None)
@given(arrays(np.int64, st.integers(0, 50), elements=st.integers(0, 2**31 - 1)))
def test_labels_roundtrip(tmp_path_factory, y):
    p = tmp_path_factory.mktemp("l") / "y.lvec"
    write_labels(p, y)
    np.testing.assert_array_equal(read_labels(p), y)


def test_bad_magic(tmp_path):
    p = tmp_path / "m.fmat"
    write_matrix(p, np.ones((2, 2)))
    p.write_bytes(b"XMAT" + p.read_bytes()[4:])
    with pytest.raises(BadMagic):
        read_matrix(p)


def test_truncated(tmp_path):
    p = tmp_path / "m.fmat"
    write_matrix(p, np.ones((3, 2)))
    p.write_bytes(p.read_bytes()[:-7])
    with pytest.raises(TruncatedFile):
        read_matrix(p)


def test_non_finite_payload(tmp_path):
    p = tmp_path / "m.fmat"
    p.write_bytes(struct.pack("<4sII", b"FMAT", 1, 1) + struct.pack("<d", np.nan))
    with pytest.raises(NonFiniteValue):
        read_matrix(p)
    with pytest.raises(NonFiniteValue):
        write_matrix(p, np.array([[np.inf]]))


def test_csv_import(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("1,2\n3,4.5\n")
    np.testing.assert_array_equal(read_csv_matrix(p), [[1, 2], [3, 4.5]])


def test_synthetic_zero_spread():
    spec = SyntheticSpec(classes=3, train_per_class=4, cluster_spread=0.0)
    data = generate_synthetic(spec)
    for c in range(3):
        rows = data.X_train[data.y_train == c]
        assert np.all(rows == rows[0])


def test_synthetic_redundancy_rank():
    spec = SyntheticSpec(classes=5, train_per_class=100, feature_dim=12, redundancy=5)
    X = generate_synthetic(spec).X_train
    s = np.linalg.svd(np.cov(X.T), compute_uv=False)
    # copies differ from originals only by 1e-6 jitter
    assert np.sum(s > 1e-8 * s[0]) <= 12 - 5
    assert np.sum(s > 1e-16 * s[0]) <= 12


def test_synthetic_is_pure():
    spec = SyntheticSpec(seed=5, redundancy=3, domain_gap=2.0, n_tasks=2)
    a, b = generate_synthetic(spec), generate_synthetic(spec)
    assert a.X_train.tobytes() == b.X_train.tobytes()
    assert a.X_test.tobytes() == b.X_test.tobytes()


def _labels(C, per=3):
    return np.repeat(np.arange(C), per)


def test_split_equal():
    y = _labels(10)
    split = split_tasks(np.zeros((30, 2)), y, 0, 5, 0)
    assert [len(b.classes) for b in split.train] == [5, 5]


def test_split_base_plus_increments():
    split = split_tasks(np.zeros((30, 2)), _labels(10), 4, 3, 0)
    assert [len(b.classes) for b in split.train] == [4, 3, 3]


def test_split_indivisible():
    with pytest.raises(IndivisibleSplit):
        split_tasks(np.zeros((30, 2)), _labels(10), 4, 4, 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([(0, 2), (0, 5), (4, 3), (2, 4), (6, 1)]))
def test_split_partitions_samples(seed, mn):
    rng = np.random.default_rng(seed)
    y = rng.permutation(_labels(10, 4))
    X = np.arange(40.0)[:, None]
    split = split_tasks(X, y, *mn, seed)
    seen = [c for b in split.train for c in b.classes]
    assert sorted(seen) == list(range(10))
    rows = np.concatenate([b.features[:, 0] for b in split.train])
    assert sorted(rows.tolist()) == X[:, 0].tolist()
    for b in split.train:
        assert set(b.labels.tolist()) <= set(b.classes)


def test_protocol_parsing():
    assert parse_protocol("B-0,Inc-10") == (0, 10)
    assert parse_protocol("B-50, Inc-5") == (50, 5)
    with pytest.raises(MalformedValue):
        parse_protocol("Inc-5")


def test_config_defaults(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# nothing set\n")
    cfg = parse_config(p)
    assert cfg == RunConfig()
    assert (cfg.r, cfg.epsilon, cfg.lam, cfg.s, cfg.b_max) == (0.99, 0.01, 0.01, 50, 10)
    assert (cfg.xi_min, cfg.delta_xi, cfg.xi_max) == (0.0008, 0.0001, 0.004)


def test_config_values_and_errors(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("lambda = 0.1\ns = 5  # block size\nper_column = true\n")
    cfg = parse_config(p)
    assert (cfg.lam, cfg.s, cfg.per_column) == (0.1, 5, True)
    p.write_text("r = 1.5\n")
    with pytest.raises(MalformedValue):
        parse_config(p)
    p.write_text("typo_key = 3\n")
    with pytest.raises(UnknownKey):
        parse_config(p)


def test_synthetic_spec_file(tmp_path):
    p = tmp_path / "s.txt"
    p.write_text("classes = 4\nredundancy = 2\n")
    spec = parse_synthetic_spec(p)
    assert spec.classes == 4 and spec.redundancy == 2


def test_model_roundtrip(tmp_path):
    rng = make_rng(0)
    model = RplModel(3, (sample_block(rng, 3, 2, 0.1), sample_block(rng, 3, 4, 0.7)))
    save_model(tmp_path / "m.fmat", model)
    back = load_model(tmp_path / "m.fmat")
    assert [b.size for b in back.blocks] == [2, 4]
    assert [b.xi for b in back.blocks] == [0.1, 0.7]
    Z = rng.normal(size=(5, 3))
    assert project(Z, back).tobytes() == project(Z, model).tobytes()
