"""Backend selection for the numeric kernels.

The compiled extension is used when it was built; otherwise the pure-Python
module is loaded. Set ``CAMSYNC_PURE_PYTHON=1`` to force the fallback.
"""

import os

if os.environ.get("CAMSYNC_PURE_PYTHON", "") not in ("", "0"):
    from . import _kernels_py as _impl
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        from . import _kernels_py as _impl

BACKEND = "cython" if _impl.__name__.endswith("._kernels") else "python"

half_away = _impl.half_away
centered = _impl.centered
ntp_offsets = _impl.ntp_offsets
latched_min = _impl.latched_min
running_mean = _impl.running_mean
first_acceptance = _impl.first_acceptance
snap = _impl.snap
plan_exposure = _impl.plan_exposure
injection_shift = _impl.injection_shift
injection_runs = _impl.injection_runs
overlap_centroids = _impl.overlap_centroids
ks_uniform = _impl.ks_uniform
