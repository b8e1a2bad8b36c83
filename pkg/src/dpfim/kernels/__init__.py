"""Numerical kernel backend selection.

Two interchangeable backends provide the fused training kernels: a
compiled Cython extension (``_fused``) and a NumPy fallback
(``reference``). The compiled backend is preferred when importable; set
``DPFIM_KERNELS=numpy`` to force the fallback or ``DPFIM_KERNELS=compiled``
to fail loudly if the extension is missing. The choice is made once at
import so a whole run uses a single backend (recorded in the manifest).
"""

from __future__ import annotations

import os

from . import reference

_KERNEL_NAMES = (
    "layernorm_fwd",
    "layernorm_bwd",
    "causal_softmax_fwd",
    "causal_softmax_bwd",
    "gelu_fwd",
    "gelu_bwd",
    "masked_ce",
    "embedding_bwd",
)


def _load_compiled():
    from . import _fused  # noqa: PLC0415

    return _fused


def get_backend(name: str):
    """Return the kernel module for ``name`` ("numpy" or "compiled")."""
    if name == "numpy":
        return reference
    if name == "compiled":
        return _load_compiled()
    raise ValueError(f"unknown kernel backend {name!r}")


_choice = os.environ.get("DPFIM_KERNELS", "auto")
if _choice == "numpy":
    _impl = reference
    BACKEND = "numpy"
elif _choice == "compiled":
    _impl = _load_compiled()
    BACKEND = "compiled"
elif _choice == "auto":
    try:
        _impl = _load_compiled()
        BACKEND = "compiled"
    except ImportError:
        _impl = reference
        BACKEND = "numpy"
else:
    raise ValueError(f"DPFIM_KERNELS must be auto, numpy, or compiled; got {_choice!r}")

layernorm_fwd = _impl.layernorm_fwd
layernorm_bwd = _impl.layernorm_bwd
causal_softmax_fwd = _impl.causal_softmax_fwd
causal_softmax_bwd = _impl.causal_softmax_bwd
gelu_fwd = _impl.gelu_fwd
gelu_bwd = _impl.gelu_bwd
masked_ce = _impl.masked_ce
embedding_bwd = _impl.embedding_bwd

__all__ = ["BACKEND", "get_backend", *_KERNEL_NAMES]
