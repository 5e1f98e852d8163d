# -*- coding: utf-8 -*-
# License: BSD 3 clause
"""File output helpers: atomic writes and CSV tables."""
import contextlib
import logging
import os
import tempfile

import pandas

from tactev.exceptions import InvalidInputError

logger = logging.getLogger(__name__)

__all__ = ['atomic_write', 'write_csv', 'read_csv', 'write_text']


@contextlib.contextmanager
def atomic_write(path, binary=False):
    """Open a temporary file next to `path`, rename it over `path` on success.

    A failure inside the block removes the temporary file and leaves any
    existing `path` untouched.
    """
    path = os.path.abspath(path)
    dirname = os.path.dirname(path)
    os.makedirs(dirname, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix='.' + os.path.basename(path) + '.',
                               suffix='.tmp', dir=dirname)
    mode = 'wb' if binary else 'w'
    try:
        with os.fdopen(fd, mode) as fp:
            yield fp
            fp.flush()
            os.fsync(fp.fileno())
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.remove(tmp)
        raise
    logger.debug('wrote %s', path)


def write_csv(frame, path):
    """Write a pandas DataFrame as CSV without the index."""
    with atomic_write(path) as fp:
        frame.to_csv(fp, index=False)


def write_text(text, path):
    with atomic_write(path) as fp:
        fp.write(text)


def read_csv(path, columns=None):
    """Read a CSV file, optionally checking that `columns` are present.

    Raises
    ------
    InvalidInputError
        If the file is missing or lacks required columns.
    """
    try:
        frame = pandas.read_csv(path)
    except FileNotFoundError:
        raise InvalidInputError('no such file: %s' % path)
    if columns is not None:
        missing = [c for c in columns if c not in frame.columns]
        if missing:
            raise InvalidInputError('%s: missing columns %s' %
                                    (path, ', '.join(missing)))
    return frame
