"""Kernel backend selection.

The compiled extension is used when importable; setting the environment
variable ``PATHMSMC_PURE_PYTHON=1`` forces the pure-Python kernels.
"""
import os

from . import _pykernels

BACKEND = "python"

if os.environ.get("PATHMSMC_PURE_PYTHON", "").strip() not in ("", "0"):
    from ._pykernels import gibbs_sweeps, grow_path
else:
    try:
        from ._ckernels import gibbs_sweeps, grow_path

        BACKEND = "cython"
    except ImportError:  # extension not built
        from ._pykernels import gibbs_sweeps, grow_path

__all__ = ["BACKEND", "gibbs_sweeps", "grow_path", "_pykernels"]
