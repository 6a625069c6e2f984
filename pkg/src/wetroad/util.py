"""Small filesystem helpers shared by the CLI and the corpus generator."""

from __future__ import annotations

import os
import tempfile


def atomic_write(path, write_fn) -> None:
    """Run write_fn against a temp file, then rename over path.

    Guarantees no partially-written file remains at path on failure.
    """
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    os.close(fd)
    try:
        write_fn(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
