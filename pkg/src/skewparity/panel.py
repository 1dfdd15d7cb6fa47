"""Return panels: a T x n matrix of period returns plus frequency metadata."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class ReturnPanel:
    """Period returns of ``n`` assets observed at ``T`` dates.

    Parameters
    ----------
    data : array_like, shape (T, n)
        Simple returns per holding period. A 1-D input is read as a single
        asset.
    dt : float
        Holding period in years (1/52 for weekly returns).
    labels : sequence of str, optional
        Asset names; defaults to ``asset1 ... assetn``.
    dates : sequence, optional
        One date label per row (kept as given, typically ISO strings).
    """

    data: np.ndarray
    dt: float = 1.0
    labels: tuple = field(default=())
    dates: Optional[tuple] = None

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2:
            raise ValueError(f"return data must be 2-D, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError("no observations")
        if not np.all(np.isfinite(data)):
            bad = np.argwhere(~np.isfinite(data))[0]
            raise ValueError(f"non-finite return at row {bad[0]}, column {bad[1]}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        labels = tuple(self.labels) or tuple(f"asset{i + 1}" for i in range(data.shape[1]))
        if len(labels) != data.shape[1]:
            raise ValueError(f"{len(labels)} labels for {data.shape[1]} assets")
        object.__setattr__(self, "labels", labels)
        if self.dates is not None:
            dates = tuple(self.dates)
            if len(dates) != data.shape[0]:
                raise ValueError(f"{len(dates)} dates for {data.shape[0]} rows")
            object.__setattr__(self, "dates", dates)

    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def n(self) -> int:
        return self.data.shape[1]

    def window(self, start: int, stop: int) -> "ReturnPanel":
        """Rows ``start:stop`` as a new panel."""
        dates = None if self.dates is None else self.dates[start:stop]
        return ReturnPanel(self.data[start:stop], self.dt, self.labels, dates)

    def select(self, columns: Sequence[int]) -> "ReturnPanel":
        cols = list(columns)
        return ReturnPanel(self.data[:, cols], self.dt, tuple(self.labels[i] for i in cols), self.dates)
