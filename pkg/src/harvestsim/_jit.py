"""Select numba or plain-Python execution for the step kernels.

Set ``HARVESTSIM_NO_JIT=1`` before import to run every kernel as ordinary
Python over numpy arrays (slow, but debuggable and free of compilation).
"""
import os

_FLAG = os.environ.get("HARVESTSIM_NO_JIT", "").strip().lower()
JIT_ENABLED = _FLAG not in ("1", "true", "yes", "on")

if JIT_ENABLED:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        JIT_ENABLED = False

if JIT_ENABLED:
    def jit(func):
        return njit(cache=True)(func)
else:
    def jit(func):
        return func

BACKEND = "numba" if JIT_ENABLED else "python"
