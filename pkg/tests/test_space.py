import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import TABLE1_ARCH1, TABLE1_ARCH2
from _builders import onehot_schema, table1_schema

from gbdtnas.space import (
    Architecture,
    FeatureGroup,
    FeatureSchema,
    PrunedSet,
    SamplingError,
    SchemaError,
    check_satisfiable,
    enumerate_space,
    load_schema,
    save_schema,
    schema_from_dict,
    schema_to_dict,
)


# -- reference encodings -------------------------------------------------------


def test_encode_reference_arch1(table1_schema):
    arch = Architecture((0, (1,), 0, (1, 0), 1, (0, 0, 1), 1))
    assert np.array_equal(table1_schema.encode(arch), TABLE1_ARCH1)


def test_encode_reference_arch2(table1_schema):
    arch = Architecture((1, (1,), 1, (0, 1), 1, (0, 1, 1), 1))
    assert np.array_equal(table1_schema.encode(arch), TABLE1_ARCH2)


def test_encode_four_layer_chain():
    schema = FeatureSchema(
        tuple(
            FeatureGroup("onehot", (f"layer {i} is conv1x1", f"layer {i} is conv3x3"))
            for i in range(1, 5)
        )
    )
    # conv1x1, conv3x3, conv1x1, conv3x3
    arch = Architecture((0, 1, 0, 1))
    assert np.array_equal(schema.encode(arch), [1, 0, 0, 1, 1, 0, 0, 1])
    assert schema.decode([1, 0, 0, 1, 1, 0, 0, 1]) == arch


def test_decode_reference_round_trip(table1_schema):
    for vec in (TABLE1_ARCH1, TABLE1_ARCH2):
        assert np.array_equal(table1_schema.encode(table1_schema.decode(vec)), vec)


def test_decode_all_zero_binary_bits(table1_schema):
    arch = Architecture((0, (0,), 0, (0, 0), 0, (0, 0, 0), 0))
    vec = table1_schema.encode(arch)
    assert table1_schema.decode(vec) == arch


def test_decode_rejects_multi_hot(table1_schema):
    bad = TABLE1_ARCH1.copy()
    bad[1] = 1  # both ops of layer 1 active
    with pytest.raises(SchemaError, match="one-hot"):
        table1_schema.decode(bad)


def test_decode_rejects_zero_hot(table1_schema):
    bad = TABLE1_ARCH1.copy()
    bad[0] = 0
    with pytest.raises(SchemaError):
        table1_schema.decode(bad)


def test_encode_rejects_out_of_range_choice(table1_schema):
    with pytest.raises(SchemaError, match="out of range"):
        table1_schema.encode(Architecture((2, (1,), 0, (1, 0), 1, (0, 0, 1), 1)))


def test_schema_label_bookkeeping(table1_schema):
    assert table1_schema.total_dim == 14
    assert table1_schema.feature_labels[0] == "layer 1 is conv1x1"
    assert table1_schema.label_index("layer 4 is conv3x3") == 13
    assert table1_schema.group_of_feature(2) == 1
    with pytest.raises(SchemaError):
        table1_schema.label_index("nope")


def test_schema_validation_errors():
    with pytest.raises(SchemaError):
        FeatureGroup("onehot", ("only",))
    with pytest.raises(SchemaError):
        FeatureGroup("categorical", ("a", "b"))
    with pytest.raises(SchemaError):
        FeatureSchema((FeatureGroup("binary", ("x",)), FeatureGroup("binary", ("x",))))


# -- property: lossless round trip ----------------------------------------------


@st.composite
def schema_and_arch(draw):
    groups = []
    n_groups = draw(st.integers(1, 4))
    for g in range(n_groups):
        kind = draw(st.sampled_from(["onehot", "binary"]))
        width = draw(st.integers(2, 4)) if kind == "onehot" else draw(st.integers(1, 3))
        groups.append(FeatureGroup(kind, tuple(f"g{g} f{i}" for i in range(width))))
    schema = FeatureSchema(tuple(groups))
    assignments = []
    for g in schema.groups:
        if g.kind == "onehot":
            assignments.append(draw(st.integers(0, g.width - 1)))
        else:
            assignments.append(tuple(draw(st.integers(0, 1)) for _ in range(g.width)))
    return schema, Architecture(tuple(assignments))


@given(schema_and_arch())
@settings(max_examples=100)
def test_round_trip_property(pair):
    schema, arch = pair
    vec = schema.encode(arch)
    assert schema.decode(vec) == arch
    assert np.array_equal(schema.encode(schema.decode(vec)), vec)


# -- sampling --------------------------------------------------------------------


def test_sample_uniform_deterministic(table1_schema):
    a = table1_schema.sample_uniform(123)
    b = table1_schema.sample_uniform(123)
    assert a == b


def test_sample_uniform_onehot_frequency():
    schema = FeatureSchema((FeatureGroup("onehot", ("a", "b")),))
    rng = np.random.default_rng(7)
    draws = [schema.sample_uniform(rng).assignments[0] for _ in range(10000)]
    freq = np.mean(draws)
    assert abs(freq - 0.5) < 0.02


def test_sample_uniform_binary_frequency():
    schema = FeatureSchema((FeatureGroup("binary", ("bit",)),))
    rng = np.random.default_rng(11)
    draws = [schema.sample_uniform(rng).assignments[0][0] for _ in range(10000)]
    assert abs(np.mean(draws) - 0.5) < 0.02


def test_sample_constrained_forbidden_feature_never_set(table1_schema):
    z = PrunedSet(frozenset({table1_schema.label_index("layer 1 is conv1x1")}))
    rng = np.random.default_rng(3)
    for _ in range(500):
        bits = table1_schema.encode(table1_schema.sample_constrained(z, rng))
        assert bits[0] == 0


def test_sample_constrained_forbidden_pair_never_both():
    schema = onehot_schema(3, 3)
    z = PrunedSet(frozenset(), frozenset({(0, 3)}))
    rng = np.random.default_rng(5)
    for _ in range(10000):
        bits = schema.encode(schema.sample_constrained(z, rng))
        assert not (bits[0] and bits[3])


def test_sample_constrained_empty_matches_uniform(table1_schema):
    for seed in range(20):
        assert table1_schema.sample_constrained(PrunedSet(), seed) == table1_schema.sample_uniform(
            seed
        )


def test_sample_constrained_unsatisfiable_pairs():
    schema = FeatureSchema((FeatureGroup("onehot", ("a", "b")), FeatureGroup("onehot", ("c", "d"))))
    # every cross combination forbidden
    z = PrunedSet(frozenset(), frozenset({(0, 2), (0, 3), (1, 2), (1, 3)}))
    with pytest.raises(SamplingError, match="over-pruned"):
        schema.sample_constrained(z, 0, max_attempts=50)


def test_check_satisfiable_rejects_emptied_group():
    schema = FeatureSchema((FeatureGroup("onehot", ("a", "b")),))
    with pytest.raises(SamplingError, match="forbidden"):
        check_satisfiable(schema, PrunedSet(frozenset({0, 1})))


# -- enumeration -----------------------------------------------------------------


def test_enumerate_counts_plain():
    schema = onehot_schema(4, 3)
    assert sum(1 for _ in enumerate_space(schema)) == 81


def test_enumerate_counts_one_choice_forbidden():
    schema = onehot_schema(4, 3)
    z = PrunedSet(frozenset({0}))
    assert sum(1 for _ in enumerate_space(schema, z)) == 54


def test_enumerate_counts_table1(table1_schema):
    assert table1_schema.size() == 1024
    assert sum(1 for _ in enumerate_space(table1_schema, cap=2000)) == 1024


def test_enumerate_respects_pairs():
    schema = FeatureSchema((FeatureGroup("onehot", ("a", "b")), FeatureGroup("onehot", ("c", "d"))))
    z = PrunedSet(frozenset(), frozenset({(0, 2)}))
    archs = list(enumerate_space(schema, z))
    assert len(archs) == 3
    for arch in archs:
        bits = schema.encode(arch)
        assert not (bits[0] and bits[2])


def test_enumerate_unique_and_lexicographic():
    schema = onehot_schema(3, 3)
    archs = [a.assignments for a in enumerate_space(schema)]
    assert len(set(archs)) == 27
    assert archs == sorted(archs)


def test_enumerate_cap_exceeded():
    schema = onehot_schema(4, 3)
    with pytest.raises(SamplingError, match="cap"):
        list(enumerate_space(schema, cap=80))


def test_every_emitted_vector_is_group_exclusive(table1_schema):
    rng = np.random.default_rng(9)
    for _ in range(200):
        vec = table1_schema.encode(table1_schema.sample_uniform(rng))
        table1_schema.decode(vec)  # raises on any exclusivity violation


# -- pruned sets -----------------------------------------------------------------


def test_pruned_set_normalizes_pairs():
    z = PrunedSet(frozenset(), frozenset({(5, 2)}))
    assert z.forbidden_pairs == frozenset({(2, 5)})
    with pytest.raises(SchemaError):
        PrunedSet(frozenset(), frozenset({(3, 3)}))


def test_pruned_set_union_grows_monotonically():
    a = PrunedSet(frozenset({1}))
    b = a.with_features([2]).with_pairs([(0, 3)])
    u = a.union(b)
    assert a.forbidden_features <= u.forbidden_features
    assert b.forbidden_pairs <= u.forbidden_pairs
    assert len(u) == 3


def test_pruned_set_allows():
    z = PrunedSet(frozenset({0}), frozenset({(1, 2)}))
    assert z.allows(np.array([0, 1, 0, 1], dtype=np.uint8))
    assert not z.allows(np.array([1, 0, 0, 0], dtype=np.uint8))
    assert not z.allows(np.array([0, 1, 1, 0], dtype=np.uint8))


# -- schema files ----------------------------------------------------------------


def test_schema_json_round_trip(tmp_path, table1_schema):
    path = tmp_path / "schema.json"
    save_schema(table1_schema, path)
    assert load_schema(path) == table1_schema


def test_schema_from_dict_bad_document():
    with pytest.raises(SchemaError):
        schema_from_dict({"nope": []})
    doc = schema_to_dict(table1_schema := onehot_schema(2, 2))
    assert schema_from_dict(doc) == table1_schema
