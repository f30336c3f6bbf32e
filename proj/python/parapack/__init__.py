"""Parallel battery pack modelling, observability and SOC estimation."""

import json as _json

from . import _core
from ._core import *  # noqa: F401,F403

__all__ = [n for n in dir(_core) if not n.startswith("_")]


def observability_report(ss, gammas, rs, rel_gap_tol=1e-6):
    """check_observability decoded into a dict."""
    return _json.loads(_core.check_observability(ss, gammas, rs, rel_gap_tol))


def cluster_pack(model, gap_threshold=0.1, soc_lo=0.4, soc_hi=0.6):
    return _json.loads(_core.cluster(model, gap_threshold, soc_lo, soc_hi))


def study(config_path, jobs=1, out_dir=None):
    res = _core.run_study(config_path, jobs, out_dir)
    res["summary"] = _json.loads(res["summary"])
    return res
