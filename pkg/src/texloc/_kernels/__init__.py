"""Kernel backend selection.

Prefers the compiled Cython core, falls back to the numpy implementation.
Set TEXLOC_PURE_KERNELS=1 to force the fallback (used by the parity tests
and the benchmark).
"""

import os

from . import _pure

if os.environ.get("TEXLOC_PURE_KERNELS"):
    _impl = _pure
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _pure

sample_bilinear = _impl.sample_bilinear
binary_comparison_bits = _impl.binary_comparison_bits
joint_peak_term = _impl.joint_peak_term


def backend_name() -> str:
    """Which kernel implementation is active: "compiled" or "pure"."""
    return _impl.BACKEND
