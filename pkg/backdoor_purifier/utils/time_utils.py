import logging
import time
from contextlib import contextmanager
from typing import Dict, Iterator


class StageTimer:
    """Accumulates wall-clock seconds per named pipeline stage."""

    def __init__(self):
        self.logger = logging.getLogger(__name__)
        self._seconds: Dict[str, float] = {}

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        """
        Time the enclosed block and add it to the stage total.

        Args:
            name: Stage name as it appears in the report
        """
        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed = time.perf_counter() - start
            self._seconds[name] = self._seconds.get(name, 0.0) + elapsed
            self.logger.debug(f"Stage {name} took {elapsed:.3f}s")

    def seconds(self, name: str) -> float:
        return self._seconds.get(name, 0.0)

    def as_dict(self) -> Dict[str, float]:
        return dict(self._seconds)
