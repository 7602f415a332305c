"""Hot recursions (Riccati backward pass, policy roll-out, adjoint/tangent
products) with a compiled backend and a numpy fallback.

The compiled extension is used when it was built; set ``TRAJOPT_PURE_PYTHON=1``
to force the fallback.
"""

import os

from . import _lq_py

if os.environ.get("TRAJOPT_PURE_PYTHON", "") not in ("", "0"):
    _impl = _lq_py
else:
    try:
        from . import _lq_cy as _impl
    except ImportError:
        _impl = _lq_py

BACKEND = _impl.BACKEND
OK = _lq_py.OK
NOT_PD = _lq_py.NOT_PD
LAMBDA_OVERFLOW = _lq_py.LAMBDA_OVERFLOW

lq_backward = _impl.lq_backward
lq_rollout = _impl.lq_rollout
adjoint = _impl.adjoint
tangent = _impl.tangent


def available_backends():
    """Kernel modules importable in this installation, fallback first."""
    mods = [_lq_py]
    try:
        from . import _lq_cy
    except ImportError:
        pass
    else:
        mods.append(_lq_cy)
    return mods
