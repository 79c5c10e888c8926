import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cwnet.complex import total_cells, validate
from cwnet.synth import (
    Dataset,
    DatasetFormatError,
    GeneratorConfig,
    check_dataset,
    dumps_dataset,
    generate_dataset,
    item_rng,
    loads_dataset,
    random_complex,
    save_dataset,
    load_dataset,
    simple_cycles,
    split,
)

TRIANGLE_FILE = """CWDS 1
config 1 2 3 3 1 0
item 0 7.0
sizes 3 3 1
B 1
-1 0 1
1 -1 0
0 1 -1
B 2
1
1
1
mask 3 3 1
"""

POINTS_FILE = """CWDS 1
config 2 0 4 9
item 0 4.0
sizes 4
mask 4
item 1 2.0
sizes 4
mask 2
"""

FLAT_FILE = """CWDS 1
config 1 2 3 3 2 5
item 0 5.0
sizes 3 3 2
B 1
-1 0 0
1 -1 0
0 1 0
B 2
0 0
0 0
0 0
mask 3 2 0
"""


def connected(cx) -> bool:
    n0 = cx.real_sizes[0]
    parent = list(range(n0))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    if cx.dimension >= 1:
        for col in cx.boundary(1).T[: cx.real_sizes[1]]:
            u, v = np.flatnonzero(col)
            parent[find(u)] = find(v)
    return len({find(v) for v in range(n0)}) == 1


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**64 - 1), st.integers(0, 10**6))
def test_random_complex_is_valid_connected_and_padded(seed, index):
    cx, _ = random_complex((8, 12, 6), item_rng(seed, index), (3, 3, 1))
    assert validate(cx).ok
    assert cx.skeleton_sizes == (8, 12, 6)
    assert not (cx.boundary(1) @ cx.boundary(2)).any()
    assert connected(cx)
    assert 3 <= cx.real_sizes[0] <= 8
    assert cx.real_sizes[0] - 1 <= cx.real_sizes[1] <= 12
    assert 1 <= cx.real_sizes[2] <= 6


def test_random_complex_deterministic():
    a, _ = random_complex((8, 12, 6), np.random.default_rng(42))
    b, _ = random_complex((8, 12, 6), np.random.default_rng(42))
    assert a == b


def test_edge_count_clamped_with_provenance():
    cx, prov = random_complex((3, 12), np.random.default_rng(0), (3, 12))
    assert cx.real_sizes == (3, 3)
    assert prov["clamped"]


def test_simple_cycles_of_k4():
    edges = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    cycles = simple_cycles(4, edges)
    # 4 triangles and 3 squares
    assert sorted(len(c) for c in cycles) == [3, 3, 3, 3, 4, 4, 4]


def test_default_dataset(default_dataset):
    assert len(default_dataset) == 500
    assert check_dataset(default_dataset) == []
    assert all(y == total_cells(cx) for cx, y in default_dataset)
    assert np.std(default_dataset.targets) > 0


def test_targets_vary_over_many_samples():
    targets = [total_cells(random_complex((8, 12, 6), item_rng(1, i), (3, 3, 1))[0]) for i in range(2000)]
    assert np.std(targets) > 0


def test_generation_is_pure():
    config = GeneratorConfig(dataset_size=25, seed=17)
    assert dumps_dataset(generate_dataset(config)) == dumps_dataset(generate_dataset(config))
    other = GeneratorConfig(dataset_size=25, seed=18)
    assert dumps_dataset(generate_dataset(config)) != dumps_dataset(generate_dataset(other))


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(dataset_size=0),
        dict(max_profile=(2, 3, 1)),
        dict(min_profile=(9, 3, 1)),
        dict(max_profile=(8, 5, 6)),
        dict(max_profile=(8, 12, 6, 2), min_profile=(3, 3, 1, 0)),
        dict(seed=-1),
    ],
)
def test_generator_config_rejected(kwargs):
    with pytest.raises(ValueError):
        GeneratorConfig(**kwargs).check()


def test_split(default_dataset):
    train, test = split(default_dataset, 0.8, 0)
    assert (len(train), len(test)) == (400, 100)
    assert set(train.indices).isdisjoint(test.indices)
    assert sorted(train.indices + test.indices) == list(range(500))
    again, _ = split(default_dataset, 0.8, 0)
    assert again.indices == train.indices
    other, _ = split(default_dataset, 0.8, 1)
    assert other.indices != train.indices
    for frac in (0.0, 1.0, 0.001):
        with pytest.raises(ValueError):
            split(default_dataset, frac, 0)


def test_round_trip(default_dataset, tmp_path):
    path = tmp_path / "d.cwds"
    save_dataset(default_dataset, path)
    loaded = load_dataset(path)
    assert loaded == default_dataset
    assert [cx.real_sizes for cx in loaded.complexes] == [cx.real_sizes for cx in default_dataset.complexes]
    assert dumps_dataset(loaded) == path.read_text()


def test_round_trip_of_a_subset_keeps_indices(small_dataset):
    _, test = split(small_dataset, 0.5, 2)
    assert loads_dataset(dumps_dataset(test)).indices == test.indices


def test_round_trip_with_custom_min_profile():
    data = generate_dataset(GeneratorConfig(dataset_size=5, min_profile=(4, 4, 2), seed=1))
    text = dumps_dataset(data)
    assert "minprofile 4 4 2" in text
    assert loads_dataset(text) == data


@pytest.mark.parametrize("text, totals", [(TRIANGLE_FILE, [7]), (POINTS_FILE, [4, 2]), (FLAT_FILE, [5])])
def test_hand_written_files(text, totals):
    data = loads_dataset(text)
    assert [total_cells(cx) for cx in data.complexes] == totals
    assert dumps_dataset(data) == text


def test_truncated_file_is_rejected():
    text = dumps_dataset(generate_dataset(GeneratorConfig(dataset_size=3)))
    cut = "\n".join(text.splitlines()[:-4]) + "\n"
    with pytest.raises(DatasetFormatError, match="line"):
        loads_dataset(cut)


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda t: t.replace("CWDS 1", "CWDS 2"), "version"),
        (lambda t: t.replace("CWDS 1", "XYZ 1"), "not a CWDS"),
        (lambda t: t.replace("1 -1 0\n", "1 -1\n", 1), "entries"),
        (lambda t: t.replace("1 -1 0\n", "1 -1 x\n", 1), "integers"),
        (lambda t: t.replace("item 0 7.0", "item 0 seven"), "target"),
        (lambda t: t.replace("B 2\n1\n1\n1", "B 2\n1\n1\n-1"), "invalid complex"),
        (lambda t: t + "junk\n", "trailing"),
    ],
)
def test_malformed_files(mutate, message):
    with pytest.raises(DatasetFormatError, match=message):
        loads_dataset(mutate(TRIANGLE_FILE))


def test_dataset_requires_one_target_per_complex(triangle):
    with pytest.raises(ValueError):
        Dataset([triangle], [7.0, 1.0], GeneratorConfig())
