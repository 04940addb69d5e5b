from __future__ import annotations

import os
import tempfile
from collections.abc import Generator
from contextlib import contextmanager
from pathlib import Path

import polars as pl
from pydantic import BaseModel


@contextmanager
def atomic_path(target: Path) -> Generator[Path, None, None]:
    """Yield a temporary sibling of ``target`` and move it into place on success."""
    target = Path(target)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, name = tempfile.mkstemp(prefix=f".{target.name}.", suffix=".tmp", dir=target.parent)
    os.close(fd)
    tmp = Path(name)
    try:
        yield tmp
        os.replace(tmp, target)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


def write_json(model: BaseModel, target: Path) -> Path:
    with atomic_path(target) as tmp:
        tmp.write_text(model.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return Path(target)


def write_frame(frame: pl.DataFrame, target: Path) -> Path:
    with atomic_path(target) as tmp:
        frame.write_csv(tmp)
    return Path(target)
