"""Generic language-level helpers shared across llsp modules."""
import functools
import hashlib
import json
from typing import Any, Hashable, Iterable, List

import numpy as np


def memoized(func):
    """Cache results of a function of hashable arguments.

    Array results are frozen (``writeable = False``) before being cached so a
    caller cannot corrupt the cached value for everybody else.
    """
    cache = {}

    @functools.wraps(func)
    def _memoized_function(*args):
        try:
            return cache[args]
        except KeyError:
            pass
        except TypeError as err:
            raise UnhashableArguments(
                "Function '{}' was memoized, but was called with unhashable arguments: {}".format(
                    func.__name__, err
                )
            )
        ret = func(*args)
        if isinstance(ret, np.ndarray):
            ret.setflags(write=False)
        cache[args] = ret
        return ret

    _memoized_function.cache = cache
    return _memoized_function


class UnhashableArguments(TypeError):
    """Raise when an @memoized function receives unhashable arg or kwarg values."""


def duplicates(sequence : Iterable[Hashable]) -> List:
    """Values that occur more than once, in order of their second appearance."""
    seen = set()
    out = []
    for x in sequence:
        if x in seen and x not in out:
            out.append(x)
        seen.add(x)
    return out


def stable_hash(obj : Any) -> str:
    """sha256 of the canonical (sorted-key) JSON rendering of ``obj``."""
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()
