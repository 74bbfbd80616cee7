"""
Process-wide memo table for reductions and compiled kernel derivatives.
"""
import threading
from typing import Any, Callable, Dict, Hashable, Optional

_cache: Dict[Hashable, Any] = {}
_lock = threading.Lock()


def get_from_cache(key: Hashable) -> Optional[Any]:
    """
    Retrieves a memoized value, or None when absent.
    """
    with _lock:
        return _cache.get(key)


def set_in_cache(key: Hashable, value: Any):
    """
    Stores a value. Entries never expire.
    """
    with _lock:
        _cache[key] = value


def get_or_build(key: Hashable, builder: Callable[[], Any]) -> Any:
    """
    Returns the cached value for `key`, building and storing it on a miss.
    The builder runs outside the lock; concurrent builders of the same key
    produce equal values, and the first stored one wins.
    """
    value = get_from_cache(key)
    if value is not None:
        return value
    value = builder()
    with _lock:
        return _cache.setdefault(key, value)


def clear_cache():
    """
    Clears the entire memo table.
    """
    with _lock:
        _cache.clear()


def invalidate_cache(key: Hashable):
    """
    Invalidates a single entry.
    """
    with _lock:
        if key in _cache:
            del _cache[key]
