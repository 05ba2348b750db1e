"""Hot-loop kernel backends: numba-jitted by default, pure numpy on demand.

Selection order:

* ``VULN_PIPE_KERNELS=numpy`` forces the pure-numpy lane;
* ``VULN_PIPE_KERNELS=numba`` requires numba (ImportError surfaces);
* unset: numba when importable, numpy otherwise.

Both lanes expose the same callables; results agree within a few ulps
(exactly for the gram matrix, whose inputs are small integers).
"""

from __future__ import annotations

import os

from .numpy_backend import dual_objective, kkt_violation

_requested = os.environ.get("VULN_PIPE_KERNELS", "").strip().lower()

if _requested not in ("", "numba", "numpy"):
    raise ValueError(
        f"VULN_PIPE_KERNELS={_requested!r} not understood; use 'numba' or 'numpy'"
    )

if _requested == "numpy":
    _BACKEND = "numpy"
elif _requested == "numba":
    from . import numba_backend  # noqa: F401  (fail loudly if numba is absent)

    _BACKEND = "numba"
else:
    try:
        from . import numba_backend  # noqa: F401

        _BACKEND = "numba"
    except ImportError:
        _BACKEND = "numpy"

if _BACKEND == "numba":
    from .numba_backend import conv_forward, conv_param_grads, gram_from_csr, smo_solve
else:
    from .numpy_backend import conv_forward, conv_param_grads, gram_from_csr, smo_solve


def backend_name() -> str:
    return _BACKEND


__all__ = [
    "backend_name",
    "conv_forward",
    "conv_param_grads",
    "gram_from_csr",
    "smo_solve",
    "kkt_violation",
    "dual_objective",
]
