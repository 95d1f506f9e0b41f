"""Thread-safe token bucket used to pace outgoing requests."""

from __future__ import annotations

import threading
import time


class TokenBucket:
    """Allow ``rate_per_minute`` acquisitions per minute with a small burst.

    ``clock`` and ``sleep`` are injectable so tests do not wait.
    """

    def __init__(self, rate_per_minute: float, burst: int = 1, clock=time.monotonic, sleep=time.sleep):
        if rate_per_minute <= 0:
            raise ValueError("rate must be positive")
        self.rate = rate_per_minute / 60.0
        self.capacity = max(1, burst)
        self.tokens = float(self.capacity)
        self.clock = clock
        self.sleep = sleep
        self.updated = clock()
        self.lock = threading.Lock()

    def _refill(self):
        now = self.clock()
        self.tokens = min(self.capacity, self.tokens + (now - self.updated) * self.rate)
        self.updated = now

    def acquire(self) -> float:
        """Block until a token is available; returns the time waited."""
        waited = 0.0
        while True:
            with self.lock:
                self._refill()
                if self.tokens >= 1:
                    self.tokens -= 1
                    return waited
                need = (1 - self.tokens) / self.rate
            self.sleep(need)
            waited += need
