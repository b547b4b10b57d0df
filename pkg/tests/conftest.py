import numpy as np
import pytest

from mpfsim.engine import TrajectoryLog


def make_log(rows, dt=0.1, warmup_s=0.0, lengths=None, default_length=4.0):
    """Build a TrajectoryLog from (t, vid, vclass, x, v) or (..., u) tuples."""
    rows = sorted(rows, key=lambda r: (r[0], -r[3]))
    t = np.array([r[0] for r in rows], dtype=np.float64)
    vid = np.array([r[1] for r in rows], dtype=np.int64)
    vclass = np.array([r[2].value for r in rows], dtype=np.int8)
    x = np.array([r[3] for r in rows], dtype=np.float64)
    v = np.array([r[4] for r in rows], dtype=np.float64)
    u = np.array([r[5] if len(r) > 5 else 0.0 for r in rows], dtype=np.float64)
    ranks = np.zeros(len(rows), dtype=np.int32)
    seen = {}
    for i, ti in enumerate(t):
        seen[ti] = seen.get(ti, -1) + 1
        ranks[i] = seen[ti]
    table = lengths or {}
    for i in vid:
        table.setdefault(int(i), default_length)
    return TrajectoryLog(
        t=t,
        vid=vid,
        vclass=vclass,
        x=x,
        v=v,
        u=u,
        rank=ranks,
        dt=dt,
        warmup_s=warmup_s,
        lengths=table,
    )


@pytest.fixture
def log_builder():
    return make_log
