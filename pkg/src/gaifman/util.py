from __future__ import annotations

import hashlib
import logging
import time


def stable_hash(text: str) -> int:
    """64-bit hash of a string that is stable across processes and runs."""
    return int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "little")


class Progress:
    """Periodic progress lines with an ETA, emitted through ``logging``."""

    def __init__(self, total: int, label: str, logger: logging.Logger, every: float = 10.0):
        self.total = total
        self.label = label
        self.log = logger
        self.every = every
        self.done = 0
        self.start = self._last = time.perf_counter()

    def update(self, n: int = 1):
        self.done += n
        now = time.perf_counter()
        if now - self._last >= self.every:
            self._last = now
            rate = self.done / max(now - self.start, 1e-9)
            eta = (self.total - self.done) / rate if rate else float("inf")
            self.log.info("%s: %d/%d (%.0f/s, eta %.0fs)", self.label, self.done, self.total, rate, eta)
