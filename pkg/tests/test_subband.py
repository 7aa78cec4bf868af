import numpy as np
import pytest
import torch
from hypothesis import given, strategies as st

from neurodenoise.subband import (
    PartitionError, build_subband_input, make_partition, partition_features, subband_macs_per_frame,
)

DEFAULT = make_partition([32, 128], [8, 32, 64], [4, 2, 0], 15, 256)


def test_default_scheme_groups():
    groups = DEFAULT.groups
    assert len(groups) == 9
    assert [DEFAULT.n_groups(k) for k in range(3)] == [4, 3, 2]
    covered = sorted(b for grp in groups for b in grp.bins)
    assert covered == list(range(1, 257))
    assert DEFAULT.bounds == [(1, 32), (33, 128), (129, 256)]


def test_unit_groupings_give_one_group_per_bin():
    s = make_partition([32, 128], [1, 1, 1], [4, 2, 0], 15, 256)
    assert len(s.groups) == 256


@given(st.lists(st.sampled_from([1, 2, 4, 8]), min_size=3, max_size=3))
def test_groups_tile_once(gs):
    s = make_partition([32, 128], gs, [4, 2, 0], 15, 256)
    bins = [b for grp in s.groups for b in grp.bins]
    assert len(bins) == len(set(bins)) == 256


def test_feature_and_logit_sizes():
    assert [DEFAULT.feature_len(k) for k in range(3)] == [46, 94, 158]
    assert [DEFAULT.logit_len(k) for k in range(3)] == [80, 192, 128]


@pytest.mark.parametrize("cutoffs,groupings", [
    ([128, 32], [8, 32, 64]),      # not ascending
    ([32, 128], [7, 32, 64]),      # 7 does not divide 32
    ([32, 300], [8, 32, 64]),      # past F
])
def test_invalid_partitions(cutoffs, groupings):
    with pytest.raises(PartitionError):
        make_partition(cutoffs, groupings, [4, 2, 0], 15, 256)


def test_low_partition_ops_decrease_along_ladder():
    ops = []
    for g in (1, 2, 4, 8, 16, 32):
        s = make_partition([32, 128], [g, 32, 64], [4, 2, 0], 15, 256)
        ops.append(subband_macs_per_frame(s, [[256], [256], [256]]))
    assert all(a > b for a, b in zip(ops, ops[1:]))


def test_subband_input_layout_and_padding():
    s = make_partition([4, 8], [2, 4, 8], [2, 1, 0], 2, 16)
    mag = np.arange(1, 17, dtype=float)[None] * np.ones((3, 1))
    E = -mag
    first = s.groups[0]
    x = build_subband_input(mag, E, s, first, 1)
    # lower context off the bottom edge is zero, then bins 1-2, embedding, bins 3-4
    np.testing.assert_array_equal(x, [0, 0, 1, 2, -1, -2, 3, 4])
    last = s.groups[-1]
    x = build_subband_input(mag, E, s, last, 2)
    np.testing.assert_array_equal(x[:2], [7, 8])
    np.testing.assert_array_equal(x[-2:], [0, 0])


def test_torch_features_match_numpy(rng):
    s = DEFAULT
    mag = rng.random((5, 256))
    E = rng.random((5, 256))
    for k in range(s.K):
        feats = partition_features(torch.tensor(mag), torch.tensor(E), s, k).numpy()
        for gi, grp in enumerate([g for g in s.groups if g.k == k]):
            for n in range(1, 6):
                np.testing.assert_array_equal(feats[n - 1, gi], build_subband_input(mag, E, s, grp, n))
