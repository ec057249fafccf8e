import pytest

from ekfadmm.utils import checkpoints, parse_list, parse_seeds


def test_seed_range_is_inclusive():
    assert parse_seeds("0..3") == [0, 1, 2, 3]
    assert parse_seeds(" 5..5 ") == [5]


def test_seed_list_keeps_order_without_duplicates():
    assert parse_seeds("3,1,3,2") == [3, 1, 2]


@pytest.mark.parametrize("text", ["", "a..b", "5..2", "1,x"])
def test_bad_seed_lists(text):
    with pytest.raises(ValueError):
        parse_seeds(text)


def test_checkpoints_span_the_run():
    points = checkpoints(100, 5)
    assert len(points) == 5
    assert points[0] == 1 and points[-1] == 100
    assert all(a < b for a, b in zip(points, points[1:]))


def test_checkpoints_for_short_runs():
    assert checkpoints(3, 10) == [1, 2, 3]
    assert checkpoints(7, 1) == [7]
    assert checkpoints(1, 4) == [1]


@pytest.mark.parametrize("args", [(0, 5), (10, 0)])
def test_checkpoints_reject_bad_sizes(args):
    with pytest.raises(ValueError):
        checkpoints(*args)


def test_parse_list():
    assert parse_list(" a, b ,,c") == ["a", "b", "c"]
    assert parse_list("") == []
