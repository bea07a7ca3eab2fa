"""Append-only trajectory store and its CSV rendering."""

from __future__ import annotations

import hashlib
import io
from typing import List, Optional

import numpy as np

SIGNAL_LABEL = {-1: "", 0: "G", 1: "Y", 2: "R"}
COLUMNS = ("vehicle", "time", "position", "velocity", "acceleration", "link", "signal", "t_access")


class TrajectoryStore:
    """Samples of every active vehicle, grouped by vehicle once finalized.

    Columns: vehicle, time (s), position along route (m), velocity (m/s),
    acceleration applied over the next step (m/s^2), link index, signal
    state seen for the vehicle's phase (-1 when none) and assigned access
    time (NaN when none).
    """

    def __init__(self):
        self._chunks: List[tuple] = []
        self.link_names: Optional[List[str]] = None
        self.data: Optional[dict] = None

    def append(self, ids, t, pos, vel, acc, link, signal, t_access):
        n = len(ids)
        self._chunks.append((ids.astype(np.int64), np.full(n, t), pos.astype(float), vel.astype(float),
                             np.asarray(acc, dtype=float).copy(), link.astype(np.int64),
                             signal.astype(np.int64), np.asarray(t_access, dtype=float).copy()))

    def finalize(self) -> "TrajectoryStore":
        if self._chunks:
            cols = [np.concatenate([c[j] for c in self._chunks]) for j in range(len(COLUMNS))]
        else:
            cols = [np.zeros(0, dtype=np.int64 if j in (0, 5, 6) else float) for j in range(len(COLUMNS))]
        order = np.lexsort((cols[1], cols[0]))
        self.data = {name: col[order] for name, col in zip(COLUMNS, cols)}
        self._chunks = []
        return self

    def __len__(self):
        return 0 if self.data is None else len(self.data["vehicle"])

    def vehicle(self, vid: int) -> dict:
        ids = self.data["vehicle"]
        lo, hi = np.searchsorted(ids, vid, "left"), np.searchsorted(ids, vid, "right")
        return {k: v[lo:hi] for k, v in self.data.items()}

    def digest(self) -> str:
        h = hashlib.sha256()
        for name in COLUMNS:
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.data[name]).tobytes())
        return h.hexdigest()

    def to_csv(self, path=None) -> str:
        """Render as CSV (one block of rows per vehicle, time ascending)."""
        d = self.data
        names = self.link_names
        buf = io.StringIO()
        buf.write(",".join(COLUMNS) + "\n")
        link = [names[k] if names else str(k) for k in d["link"].tolist()]
        sig = [SIGNAL_LABEL.get(s, "") for s in d["signal"].tolist()]
        for row in zip(d["vehicle"].tolist(), d["time"].tolist(), d["position"].tolist(),
                       d["velocity"].tolist(), d["acceleration"].tolist(), link, sig,
                       d["t_access"].tolist()):
            ta = "" if row[7] != row[7] else f"{row[7]:.3f}"
            buf.write(f"{row[0]},{row[1]:.1f},{row[2]:.3f},{row[3]:.3f},{row[4]:.3f},{row[5]},{row[6]},{ta}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text
