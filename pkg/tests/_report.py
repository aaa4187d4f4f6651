"""Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""

import functools
import time

LINES = {}


def criterion(number: int, title: str):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            start = time.perf_counter()
            try:
                detail = fn(*args, **kwargs)
            except BaseException as exc:
                LINES[number] = f"FAIL criterion {number:2d}: {title} ({type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''})"
                raise
            took = time.perf_counter() - start
            extra = f" [{detail}]" if detail else ""
            LINES[number] = f"PASS criterion {number:2d}: {title}{extra} ({took:.1f}s)"
        return run
    return wrap
