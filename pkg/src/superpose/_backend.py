"""Select the compiled kernels when available, else the numpy fallback.

Set ``SUPERPOSE_PURE_PYTHON=1`` to force the fallback.
"""
import os

if os.environ.get("SUPERPOSE_PURE_PYTHON", "") not in ("", "0"):
    from . import _fallback as kernels
else:
    try:
        from . import _kernels as kernels
    except ImportError:  # extension not built
        from . import _fallback as kernels

BACKEND = kernels.BACKEND
eval_program = kernels.eval_program
enet_cd = kernels.enet_cd
