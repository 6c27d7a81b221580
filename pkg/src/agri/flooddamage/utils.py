import logging
import os
import shutil
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator

from rxn.utilities.files import PathLike

from .errors import InputFileError

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())


def ensure_input_file(path: PathLike) -> Path:
    """
    Check that an input file exists.

    Raises:
        InputFileError: if the path does not exist or is not a file.

    Returns:
        the path as a Path object.
    """
    path = Path(path)
    if not path.is_file():
        raise InputFileError(f'Input file "{path}" does not exist.')
    return path


def ensure_input_directory(path: PathLike) -> Path:
    path = Path(path)
    if not path.is_dir():
        raise InputFileError(f'Input directory "{path}" does not exist.')
    return path


def atomic_write_bytes(path: PathLike, payload: bytes) -> None:
    """
    Write bytes to a file atomically.

    The content goes to a temporary file in the destination directory first
    and is renamed to the final name, so that readers never see a partial file.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fp:
            fp.write(payload)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.remove(tmp_name)
        raise


def atomic_write_text(path: PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


@contextmanager
def atomic_directory(path: PathLike) -> Iterator[Path]:
    """
    Context manager yielding a temporary directory that replaces ``path``
    when the block exits without error.

    An existing directory at ``path`` is replaced as a whole.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_dir = Path(tempfile.mkdtemp(prefix=f".{path.name}.", dir=path.parent))
    try:
        yield tmp_dir
    except BaseException:
        shutil.rmtree(tmp_dir, ignore_errors=True)
        raise
    if path.exists():
        shutil.rmtree(path)
    os.replace(tmp_dir, path)
    logger.debug(f'Wrote directory "{path}".')


def with_suffix_added(path: PathLike, suffix: str) -> Path:
    """Append a suffix to a path ("model.ckpt" + ".csv" -> "model.ckpt.csv")."""
    path = Path(path)
    return path.with_name(path.name + suffix)
