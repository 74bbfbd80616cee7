"""
Utils functions
"""
import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from functools import wraps
from typing import Callable, Iterable, List, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def log_function_call(func) -> callable:
    """
    A decorator that logs the function call and its arguments.

    Args:
        func: The function to be decorated

    Returns:
        function: The wrapped function with logging

    Raises:
        TypeError: If func is not callable
    """
    if not callable(func):
        raise TypeError("func must be callable")

    @wraps(func)
    def wrapper(*args, **kwargs):
        logging.info(f"Calling {func.__name__} with args: {args}, kwargs: {kwargs}")
        try:
            result = func(*args, **kwargs)
            logging.info(f"{func.__name__} returned: {type(result).__name__}")
            return result
        except Exception as e:
            logging.error(f"Exception in {func.__name__}: {e}")
            raise
    return wrapper


def derive_seed(base: int, *keys) -> int:
    """
    Derive a 63-bit seed from a base seed and task keys.

    The derivation only depends on the values, never on scheduling, so
    parallel tasks own reproducible random streams.

    Args:
        base (int): Base seed
        *keys: Anything with a stable repr (ints, strings, tuples)

    Returns:
        int: A non-negative seed
    """
    digest = hashlib.blake2b(repr((int(base),) + keys).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


def run_parallel(func: Callable[[T], R], items: Iterable[T], jobs: int = 1) -> List[R]:
    """
    Map `func` over `items` on a thread pool; results keep submission order.

    Args:
        func: Callable applied to every item
        items: Work items
        jobs (int): Worker count; 1 runs inline

    Returns:
        list: Results in the order of `items`
    """
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as executor:
        return list(executor.map(func, items))
