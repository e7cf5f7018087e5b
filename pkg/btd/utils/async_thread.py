from asyncio import get_running_loop
from concurrent.futures import ThreadPoolExecutor
from functools import partial, wraps
from typing import Awaitable, Callable, ParamSpec, TypeVar


P = ParamSpec("P")
T = TypeVar("T")

executor = ThreadPoolExecutor(thread_name_prefix="btd")


def run_in_thread(func: Callable[P, T]) -> Callable[P, Awaitable[T]]:
    """Turn a blocking numerical function into a coroutine executed on the shared worker pool."""

    @wraps(func)
    async def inner(*args: P.args, **kwargs: P.kwargs) -> T:
        return await get_running_loop().run_in_executor(executor, partial(func, *args, **kwargs))

    return inner
