# apps/worker/prefetch.py

import logging
import queue
import threading
from typing import Callable, Generic, Iterable, Iterator, Optional, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
_DONE = object()


class BatchPrefetcher(Generic[T]):
    """Assembles items on one background thread into a bounded FIFO queue.

    A single producer and a FIFO queue keep the consumer's order identical to
    the source order. Errors raised by the producer are re-raised on the
    consumer side.
    """

    def __init__(self, source: Iterable[T], depth: int = 2, transform: Optional[Callable[[T], T]] = None):
        if depth < 1:
            raise ValueError("prefetch depth must be >= 1")
        self.source = source
        self.transform = transform
        self.queue: "queue.Queue" = queue.Queue(maxsize=depth)
        self._stop = threading.Event()
        self._error: Optional[BaseException] = None
        self._thread = threading.Thread(target=self._produce, name="batch-prefetch", daemon=True)

    def _produce(self) -> None:
        try:
            for item in self.source:
                if self._stop.is_set():
                    return
                self._put(self.transform(item) if self.transform else item)
        except BaseException as exc:  # surfaced to the consumer
            self._error = exc
        finally:
            self._put(_DONE)

    def _put(self, item) -> None:
        while not self._stop.is_set():
            try:
                self.queue.put(item, timeout=0.1)
                return
            except queue.Full:
                continue

    def __iter__(self) -> Iterator[T]:
        self._thread.start()
        try:
            while True:
                item = self.queue.get()
                if item is _DONE:
                    break
                yield item
            if self._error is not None:
                raise self._error
        finally:
            self.close()

    def close(self) -> None:
        self._stop.set()
        if self._thread.is_alive():
            self._thread.join(timeout=1.0)


def prefetched(source: Iterable[T], depth: int) -> Iterable[T]:
    """Wrap ``source`` in a prefetcher when depth > 0."""
    if depth <= 0:
        return source
    logger.debug("prefetching batches with queue depth %d", depth)
    return BatchPrefetcher(source, depth)
