"""Flight-time kernel selection.

The compiled extension ``_flight`` is used when it imports; otherwise the
numpy implementation in :mod:`.flight_py`.  Set ``SILNIKOV_PURE_PYTHON=1`` to
force the fallback.
"""
import os

from . import flight_py

BACKEND = "python"
solve_flight_times = flight_py.solve_flight_times

if os.environ.get("SILNIKOV_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from ._flight import solve_flight_times  # noqa: F811
    except ImportError:  # pragma: no cover - depends on the build
        pass
    else:
        BACKEND = "compiled"

BACKENDS = {"python": flight_py.solve_flight_times}
try:
    from ._flight import solve_flight_times as _compiled

    BACKENDS["compiled"] = _compiled
except ImportError:  # pragma: no cover
    pass
