import numpy as np
import pytest
from rectcheck.errors import ModelError
from rectcheck.partition import (LOWER, UPPER, Face, InitRegion, Partition,
                                 added_thresholds, align, corner_offsets,
                                 face_vertices, initial_rectangles,
                                 insert_threshold, rectangle_bounds,
                                 refine_auto, refine_uniform, threshold_index,
                                 vertices)


@pytest.fixture
def partition():
    return Partition(('A', 'B', 'C'),
                     [(0, 4, 6, 10), (0, 2, 10), (0, 2, 4, 10)])


def test_partition_shape(partition):
    assert partition.dim == 3
    assert partition.interval_counts == (3, 2, 3)
    assert partition.rectangle_count == 18
    assert partition.bounds == ((0, 10), (0, 10), (0, 10))
    assert len(list(partition.rectangles())) == 18


def test_partition_rejects_bad_thresholds():
    with pytest.raises(ModelError):
        Partition(('A',), [(0, 2, 2, 5)])
    with pytest.raises(ModelError):
        Partition(('A',), [(0,)])
    with pytest.raises(ModelError):
        Partition(('A', 'B'), [(0, 1)])


def test_index(partition):
    assert partition.index('C') == 2
    assert partition.index(1) == 1
    with pytest.raises(ModelError):
        partition.index('D')
    with pytest.raises(ModelError):
        partition.index(3)


def test_corner_offsets_order():
    assert corner_offsets(2).tolist() == [[0, 0], [1, 0], [0, 1], [1, 1]]
    assert corner_offsets(3).shape == (8, 3)


def test_vertices_and_faces(partition):
    rectangle = (1, 0, 1)
    assert rectangle_bounds(partition, rectangle) == ((4, 6), (0, 2), (2, 4))
    points = vertices(partition, rectangle)
    assert points[0].tolist() == [4, 0, 2]
    assert points[-1].tolist() == [6, 2, 4]
    lower = face_vertices(partition, Face(rectangle, 0, LOWER))
    upper = face_vertices(partition, Face(rectangle, 0, UPPER))
    assert set(lower[:, 0]) == {4}
    assert set(upper[:, 0]) == {6}
    assert len(lower) == len(upper) == 4


def test_rectangle_out_of_range(partition):
    with pytest.raises(ModelError):
        rectangle_bounds(partition, (3, 0, 0))
    with pytest.raises(ModelError):
        rectangle_bounds(partition, (0, 0))


def test_threshold_index():
    values = (0.0, 2.0, 4.0, 4.5, 10.0)
    assert threshold_index(values, 4.5) == 3
    assert threshold_index(values, 4.5 + 1e-13) == 3
    assert threshold_index(values, 3.0) is None


def test_initial_rectangles(partition):
    region = InitRegion([(4, 6), (0, 2), (2, 10)])
    assert initial_rectangles(partition, [region]) == [(1, 0, 1), (1, 0, 2)]
    # a degenerate interval contributes no rectangle
    point = InitRegion([(4, 4), (0, 2), (2, 4)])
    assert initial_rectangles(partition, [point]) == []
    with pytest.raises(ModelError):
        initial_rectangles(partition, [InitRegion([(4, 5), (0, 2), (2, 4)])])


def test_insert_threshold(partition):
    refined = insert_threshold(partition, 'B', 4)
    assert refined.thresholds[1] == (0, 2, 4, 10)
    assert insert_threshold(refined, 'B', 4) is refined
    with pytest.raises(ModelError):
        insert_threshold(partition, 'B', 11)


def test_align(partition):
    refined, inserted = align(partition, [('B', 4.5), ('B', 4), ('B', 4),
                                          ('C', 10), ('C', -1), ('C', 3)])
    assert refined.thresholds[1] == (0, 2, 4, 4.5, 10)
    assert refined.thresholds[2] == (0, 2, 3, 4, 10)
    assert inserted == [('B', 4.5), ('B', 4.0), ('C', 3.0)]


def test_refine_uniform(partition):
    refined = refine_uniform(partition, 'B', 5)
    assert refined.thresholds[1] == (0, 2, 5, 10)
    refined = refine_uniform(partition, 'B', 1, lo=2, hi=4)
    assert refined.thresholds[1] == (0, 2, 3, 4, 10)
    with pytest.raises(ModelError):
        refine_uniform(partition, 'B', 0)
    with pytest.raises(ModelError):
        refine_uniform(partition, 'B', 1, lo=5, hi=12)


def test_refine_auto_bisects_mixed_signs(demo):
    refined = refine_auto(demo.system, demo.partition)
    added = added_thresholds(demo.partition, refined)
    # dB = 0.1A - B + C changes sign on [0, 2] along B
    assert 1.0 in added['B']
    # dA = -0.1A never changes sign strictly
    assert 'A' not in added
    for old, new in zip(demo.partition.thresholds, refined.thresholds):
        assert set(old) <= set(new)
        assert np.all(np.diff(new) > 0)


def test_refine_auto_grows_per_iteration(demo):
    once = refine_auto(demo.system, demo.partition)
    twice = refine_auto(demo.system, once)
    counts = [sum(map(len, p.thresholds))
              for p in (demo.partition, once, twice)]
    assert counts[0] < counts[1] <= counts[2]


def test_rectangles_tile_the_box(rng):
    for _ in range(20):
        thresholds = [np.unique(np.round(np.concatenate(
            [[0.0, 10.0], rng.uniform(0, 10, int(rng.integers(0, 4)))]), 3))
            for _ in range(int(rng.integers(1, 4)))]
        partition = Partition('XYZ'[:len(thresholds)], thresholds)
        volume = sum(np.prod([hi - lo for lo, hi in
                              rectangle_bounds(partition, r)])
                     for r in partition.rectangles())
        assert volume == pytest.approx(10.0 ** partition.dim, rel=1e-9)


def test_initial_rectangles_match_brute_force(partition):
    regions = [InitRegion([(4, 10), (0, 2), (2, 10)]),
               InitRegion([(0, 4), (0, 10), (0, 2)])]
    expected = sorted(
        r for r in partition.rectangles()
        if any(all(lo <= a and b <= hi for (a, b), (lo, hi) in
                   zip(rectangle_bounds(partition, r), region.intervals))
               for region in regions))
    assert initial_rectangles(partition, regions) == expected


def test_insert_threshold_splits_one_slab(partition):
    refined = insert_threshold(partition, 'C', 3)
    assert refined.rectangle_count == partition.rectangle_count * 4 // 3


def test_refine_uniform_is_idempotent(partition):
    once = refine_uniform(partition, 'A', 2.5)
    assert refine_uniform(once, 'A', 2.5) == once
