import functools


def retry(times):
    def wrap(fn):
        @functools.wraps(fn)
        def inner(*args, **kwargs):
            last = None
            for attempt in range(times):
                try:
                    return fn(*args, **kwargs)
                except RuntimeError as exc:
                    last = exc
            raise last
        return inner
    return wrap


calls = {"n": 0}


@retry(3)
def flaky():
    calls["n"] += 1
    if calls["n"] < 3:
        raise RuntimeError("not yet")
    return "ok"


print(flaky(), calls["n"])
