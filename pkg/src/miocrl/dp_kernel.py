"""Backend selection for the DP stage kernel.

``stage_min`` fills, for every SOC node, the cheapest feasible action and its
cost-to-go. The compiled extension is used when it imports; set
``MIOCRL_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

from . import _dpcore_py

_BACKENDS = {"python": _dpcore_py.stage_min}

try:
    from . import _dpcore
except ImportError:  # extension not built
    _dpcore = None
else:
    _BACKENDS["cython"] = _dpcore.stage_min

if _dpcore is not None and os.environ.get("MIOCRL_PURE_PYTHON") != "1":
    BACKEND = "cython"
else:
    BACKEND = "python"

stage_min = _BACKENDS[BACKEND]


def available():
    return sorted(_BACKENDS)


def get(name):
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"DP backend {name!r} not available (have {available()})") from None


def thread_count():
    try:
        return max(1, int(os.environ.get("MIOCRL_THREADS", "1")))
    except ValueError:
        return 1
