"""Dense float64 arrays and their on-disk forms.

Every public operation in this package works on C-contiguous (row-major)
float64 numpy arrays and returns fresh arrays; inputs are never mutated.
The binary form is little-endian: magic ``FCAT``, u32 rank, u32 extents,
then the raw float64 payload.
"""

import struct

import numpy as np

MAGIC = b"FCAT"


def as_tensor(values, shape=None):
    """Coerce ``values`` to a C-contiguous float64 array, checking finiteness.

    If ``shape`` is given the flat values are reshaped to it and the element
    count must match.
    """
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if any(s <= 0 for s in shape):
            raise ValueError(f"extents must be positive, got {shape}")
        if arr.size != int(np.prod(shape)):
            raise ValueError(
                f"cannot view {arr.size} values as shape {shape}"
            )
        arr = arr.reshape(shape)
    require_finite(arr)
    return arr


def require_finite(arr, what="tensor"):
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite entries")


def elementwise_mul_sum(a, b):
    """Sum of the entrywise product of two same-shaped arrays."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float((a * b).sum())


def reduce_mean_hw(x):
    """Spatial mean of a C x H x W array, one value per channel."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"expected a rank-3 C x H x W array, got rank {x.ndim}")
    return x.mean(axis=(1, 2))


def flat_index(idx, shape):
    """Row-major flat offset of a multi-index: last axis varies fastest."""
    if len(idx) != len(shape):
        raise ValueError("index rank does not match shape rank")
    flat = 0
    for i, (k, n) in enumerate(zip(idx, shape)):
        if not 0 <= k < n:
            raise ValueError(f"index {k} out of range for axis {i} of extent {n}")
        flat = flat * n + k
    return flat


def unflat_index(flat, shape):
    """Inverse of :func:`flat_index`."""
    idx = []
    for n in reversed(shape):
        idx.append(flat % n)
        flat //= n
    if flat != 0:
        raise ValueError("flat offset out of range for shape")
    return tuple(reversed(idx))


def save_tensor(path, arr):
    """Write ``arr`` in the little-endian binary tensor format."""
    arr = as_tensor(arr)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sI", MAGIC, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.astype("<f8", copy=False).tobytes())


def load_tensor(path):
    with open(path, "rb") as fh:
        head = fh.read(8)
        if len(head) != 8:
            raise ValueError(f"{path}: truncated header")
        magic, rank = struct.unpack("<4sI", head)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        shape = struct.unpack(f"<{rank}I", fh.read(4 * rank))
        payload = fh.read()
    expected = int(np.prod(shape)) * 8
    if len(payload) != expected:
        raise ValueError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    arr = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)
    require_finite(arr, path)
    return np.ascontiguousarray(arr)


def tensor_to_csv(path, arr):
    """Plain-text debug form: a shape line, then one value per line."""
    arr = as_tensor(arr)
    with open(path, "w") as fh:
        fh.write("shape," + ",".join(str(s) for s in arr.shape) + "\n")
        for v in arr.ravel():
            fh.write(repr(float(v)) + "\n")


def tensor_from_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header[0] != "shape":
            raise ValueError(f"{path}: missing shape line")
        shape = tuple(int(s) for s in header[1:])
        values = [float(line) for line in fh if line.strip()]
    return as_tensor(values, shape)
