"""Backend selection for the stiffness-entry kernels.

The compiled extension is used when it imports; otherwise the pure-Python
module is used. ``use_backend`` switches explicitly (benchmarks, tests).
"""

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    _BACKENDS["cython"] = _compiled

_active = _BACKENDS["cython"] if _compiled is not None else _kernels_py


def available_backends():
    return sorted(_BACKENDS)


def backend_name() -> str:
    return "cython" if _active is _compiled and _compiled is not None else "python"


def use_backend(name: str) -> None:
    global _active
    try:
        _active = _BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {available_backends()}") from None


def get_backend(name=None):
    return _active if name is None else _BACKENDS[name]


def diffusion_entries(rows, cols, nu, log_a):
    return _active.diffusion_entries(rows, cols, nu, log_a)


def reaction_entries(rows, cols, sigma, log_a):
    return _active.reaction_entries(rows, cols, sigma, log_a)
