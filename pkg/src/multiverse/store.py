"""Single-writer frame store with snapshot reads."""

from __future__ import annotations

import os
import threading
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator

from multiverse.frame import Frame


class FrameStore:
    """Holds the current committed :class:`Frame`.

    Readers call :meth:`snapshot` and get a frame that is never mutated
    afterwards.  Writers go through :meth:`transaction`, which hands out a
    private copy with the next version number and swaps it in only when the
    block exits cleanly.
    """

    def __init__(self, frame: Frame | None = None, path: str | os.PathLike | None = None):
        self._frame = frame if frame is not None else Frame()
        self._lock = threading.RLock()
        self.path = Path(path) if path is not None else None

    @classmethod
    def open(cls, path: str | os.PathLike) -> FrameStore:
        path = Path(path)
        frame = Frame.loads(path.read_text(encoding="utf-8")) if path.exists() else Frame()
        return cls(frame, path)

    @property
    def version(self) -> int:
        return self._frame.version

    def snapshot(self) -> Frame:
        return self._frame

    @property
    def lock(self) -> threading.RLock:
        return self._lock

    @contextmanager
    def transaction(self) -> Iterator[Frame]:
        with self._lock:
            draft = self._frame.copy()
            draft.version = self._frame.version + 1
            yield draft
            self._frame = draft

    def save(self, path: str | os.PathLike | None = None) -> Path:
        target = Path(path) if path is not None else self.path
        if target is None:
            raise ValueError("no path to save the frame to")
        text = self._frame.dumps()
        tmp = target.with_name(target.name + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, target)
        return target
