import numpy as np
import pytest

from llsp.util.lang import UnhashableArguments, duplicates, file_sha256, memoized, stable_hash
from llsp.util.string import comma_and, index_ranges, plural


def test_memoized_freezes_arrays():
    calls = []

    @memoized
    def ramp(n):
        calls.append(n)
        return np.arange(n)

    assert ramp(3) is ramp(3)
    assert calls == [3]
    with pytest.raises(ValueError):
        ramp(3)[0] = 7
    with pytest.raises(UnhashableArguments):
        ramp([3])


def test_duplicates():
    assert duplicates(["a", "b", "a", "c", "b", "a"]) == ["a", "b"]
    assert duplicates([]) == []


def test_stable_hash_ignores_key_order(tmp_path):
    assert stable_hash({"a": 1, "b": [2, 3]}) == stable_hash({"b": [2, 3], "a": 1})
    assert stable_hash({"a": 1}) != stable_hash({"a": 2})
    path = tmp_path / "x.txt"
    path.write_bytes(b"")
    assert file_sha256(path) == \
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"


def test_messages():
    assert comma_and(["knn1"]) == "knn1"
    assert comma_and(["knn1", "tree"]) == "knn1 and tree"
    assert comma_and(["a", "b", "c"]) == "a, b, and c"
    assert plural(1, "segment") == "1 segment"
    assert plural(4, "segment") == "4 segments"
    assert index_ranges([10, 1, 2, 3, 7, 9]) == "1-3, 7, 9-10"
    assert index_ranges([]) == ""
