"""Flat parameter container.

Layout (all integers little-endian)::

    magic   8 bytes  b"ICALPRM\\x00"
    version u16
    count   u32
    count x entry:
        name_len u16, name (utf-8)
        dtype    u8   (0 = float32, 1 = float64, 2 = int64)
        ndim     u8,  ndim x u32 extents
        raw little-endian buffer, product(extents) * itemsize bytes

Round trips are bit-exact.
"""

from __future__ import annotations

import io
import logging
import pathlib
import struct
from collections import OrderedDict

import numpy as np

from ical.errors import CheckpointError

logger = logging.getLogger(__name__)

MAGIC = b"ICALPRM\x00"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i8")}
_CODES = {dtype.newbyteorder("="): code for code, dtype in _DTYPES.items()}


def dumps(arrays: dict[str, np.ndarray]) -> bytes:
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<HI", VERSION, len(arrays)))
    for name, array in arrays.items():
        array = np.asarray(array)
        code = _CODES.get(array.dtype.newbyteorder("="))
        if code is None:
            raise CheckpointError(f"{name}: unsupported dtype {array.dtype}")
        encoded = name.encode("utf-8")
        out.write(struct.pack("<H", len(encoded)))
        out.write(encoded)
        out.write(struct.pack("<BB", code, array.ndim))
        out.write(struct.pack(f"<{array.ndim}I", *array.shape))
        out.write(np.ascontiguousarray(array, dtype=_DTYPES[code]).tobytes())
    return out.getvalue()


def loads(payload: bytes) -> OrderedDict[str, np.ndarray]:
    """Decodes a container produced by ``dumps``.

    Raises:
        CheckpointError: on a bad magic, an unknown version or truncation.
    """
    view = memoryview(payload)
    if bytes(view[:8]) != MAGIC:
        raise CheckpointError("not an ICAL parameter container (bad magic)")
    offset = 8
    try:
        version, count = struct.unpack_from("<HI", view, offset)
        offset += 6
        if version != VERSION:
            raise CheckpointError(f"container version {version} unsupported (expected {VERSION})")
        arrays: OrderedDict[str, np.ndarray] = OrderedDict()
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", view, offset)
            offset += 2
            name = bytes(view[offset : offset + name_len]).decode("utf-8")
            offset += name_len
            code, ndim = struct.unpack_from("<BB", view, offset)
            offset += 2
            shape = struct.unpack_from(f"<{ndim}I", view, offset)
            offset += 4 * ndim
            dtype = _DTYPES[code]
            nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            if offset + nbytes > len(view):
                raise CheckpointError(f"{name}: container truncated")
            arrays[name] = np.frombuffer(view[offset : offset + nbytes], dtype=dtype).reshape(shape).copy()
            offset += nbytes
    except (struct.error, KeyError) as e:
        raise CheckpointError(f"malformed container at byte {offset}: {e}") from None
    return arrays


def save(path: str | pathlib.Path, arrays: dict[str, np.ndarray]) -> pathlib.Path:
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(arrays))
    logger.debug(f"wrote {len(arrays)} arrays to {path}")
    return path


def load(path: str | pathlib.Path) -> OrderedDict[str, np.ndarray]:
    path = pathlib.Path(path)
    if not path.is_file():
        logger.error(f"Parameter file not found: {path}")
        raise CheckpointError(f"No such file: {path}")
    return loads(path.read_bytes())
