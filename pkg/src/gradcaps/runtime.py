"""Process-level tweaks that keep the numpy training loop fast on x86-64 Linux.

Two things make the float32 training loop several times slower than its
matmul cost alone:

* Adam moments and backpropagated gradients drift into the subnormal range,
  and x86 arithmetic on subnormals is one to two orders of magnitude slower.
  Setting the SSE FTZ/DAZ bits removes that cliff.
* Batch-sized temporaries are large enough that glibc serves each one with a
  fresh ``mmap``; the page faults cost more than the arithmetic. Raising the
  mmap and trim thresholds keeps those pages in the heap.

Both are no-ops where glibc or x86-64 is not available.
"""

from __future__ import annotations

import contextlib
import ctypes
import ctypes.util
import platform
import sys

_FTZ = 0x8000
_DAZ = 0x0040
_M_TRIM_THRESHOLD = -1
_M_MMAP_THRESHOLD = -3
_HEAP_THRESHOLD = 256 * 1024 * 1024


class _FEnv(ctypes.Structure):
    # glibc x86-64 fenv_t: 28 bytes of x87 environment followed by MXCSR
    _fields_ = [("x87", ctypes.c_ubyte * 28), ("mxcsr", ctypes.c_uint32)]


def _load(lib: str):
    if not sys.platform.startswith("linux") or platform.machine() not in ("x86_64", "AMD64"):
        return None
    name = ctypes.util.find_library(lib)
    if name is None:
        return None
    try:
        return ctypes.CDLL(name)
    except OSError:
        return None


_LIBM = _load("m")
_LIBC = _load("c")
_heap_tuned = False


def _set_bits(on: bool) -> bool:
    env = _FEnv()
    if _LIBM is None or _LIBM.fegetenv(ctypes.byref(env)) != 0:
        return False
    was = bool(env.mxcsr & _FTZ)
    env.mxcsr = (env.mxcsr | _FTZ | _DAZ) if on else (env.mxcsr & ~(_FTZ | _DAZ))
    _LIBM.fesetenv(ctypes.byref(env))
    return was


@contextlib.contextmanager
def flush_denormals():
    """Enable FTZ/DAZ for the calling thread; the previous mode is restored on exit."""
    if _LIBM is None:
        yield False
        return
    was = _set_bits(True)
    try:
        yield True
    finally:
        if not was:
            _set_bits(False)


def keep_heap_pages() -> bool:
    """Stop glibc from mmapping and unmapping every large temporary. Idempotent."""
    global _heap_tuned
    if _heap_tuned:
        return True
    if _LIBC is None or not hasattr(_LIBC, "mallopt"):
        return False
    ok = bool(_LIBC.mallopt(_M_MMAP_THRESHOLD, _HEAP_THRESHOLD)) and bool(
        _LIBC.mallopt(_M_TRIM_THRESHOLD, _HEAP_THRESHOLD)
    )
    _heap_tuned = ok
    return ok
