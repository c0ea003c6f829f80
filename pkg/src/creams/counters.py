"""Operation counters used for cost instrumentation.

Crypto kernels call :func:`bump` and the currently active :class:`OpCounter`
(if any) records the event.  Entities activate their own counter with
``with counter.active(): ...`` so that costs are attributed per role.
"""

from __future__ import annotations

import contextlib
import contextvars
from collections import Counter

_current: contextvars.ContextVar["OpCounter | None"] = contextvars.ContextVar(
    "creams_op_counter", default=None
)

KINDS = (
    "g1_exp",
    "g2_exp",
    "gt_exp",
    "gt_mul",
    "g1_add",
    "pairing",
    "dlog",
    "messages_sent",
    "bytes_sent",
    "bytes_stored",
)


class OpCounter:
    def __init__(self, name: str = ""):
        self.name = name
        self.counts: Counter[str] = Counter()

    def add(self, kind: str, n: int = 1) -> None:
        self.counts[kind] += n

    def __getitem__(self, kind: str) -> int:
        return self.counts[kind]

    @property
    def exponentiations(self) -> int:
        return self.counts["g1_exp"] + self.counts["g2_exp"] + self.counts["gt_exp"]

    @property
    def homomorphic_ops(self) -> int:
        """Exponentiations plus group multiplications on ciphertext components."""
        return self.exponentiations + self.counts["gt_mul"] + self.counts["g1_add"]

    def reset(self) -> None:
        self.counts.clear()

    def as_dict(self) -> dict[str, int]:
        return {k: self.counts[k] for k in KINDS}

    @contextlib.contextmanager
    def active(self):
        token = _current.set(self)
        try:
            yield self
        finally:
            _current.reset(token)


def bump(kind: str, n: int = 1) -> None:
    c = _current.get()
    if c is not None:
        c.add(kind, n)
