"""
Top-K pixel sparsification, Gaussian reconstruction and payload accounting.
"""

import math
import struct
from typing import Protocol

import numpy as np
import structlog

from app.core import metrics
from app.core.exceptions import ArtifactFormatError, RangeError
from app.models import DenseImage, ImportanceMap, Reconstruction, SparseImage

logger = structlog.get_logger(__name__)

# Row-major neighbour offsets; sums are accumulated in this fixed order.
NEIGHBOR_OFFSETS = tuple(
    (di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1) if (di, dj) != (0, 0)
)
RECONSTRUCTION_RADIUS = 2

WIRE_MAGIC = b"TKSI"
WIRE_VERSION = 1
# magic, version, bits per value, X, Y, C, kappa, count
_WIRE_HEADER = struct.Struct(">4sBBIIIdI")
WIRE_HEADER_BITS = 8 * 32
INDEX_BITS = 32


class ImportanceScorer(Protocol):
    """Maps an image to a single-channel importance map."""

    def __call__(self, image: DenseImage) -> ImportanceMap: ...


def _shifted_sum(
    values: np.ndarray, offsets: tuple[tuple[int, int], ...]
) -> tuple[np.ndarray, np.ndarray]:
    """Sum and count of in-bounds neighbours at the given offsets."""
    rows, cols = values.shape
    total = np.zeros_like(values, dtype=float)
    count = np.zeros(values.shape, dtype=np.int64)
    for di, dj in offsets:
        dst_i = slice(max(0, -di), rows - max(0, di))
        dst_j = slice(max(0, -dj), cols - max(0, dj))
        src_i = slice(max(0, di), rows - max(0, -di))
        src_j = slice(max(0, dj), cols - max(0, -dj))
        total[dst_i, dst_j] += values[src_i, src_j]
        count[dst_i, dst_j] += 1
    return total, count


class LocalContrastScorer:
    """Squared deviation of luminance from its truncated 3x3 local mean."""

    def __call__(self, image: DenseImage) -> ImportanceMap:
        luminance = image.pixels.mean(axis=2)
        window = ((0, 0), *NEIGHBOR_OFFSETS)
        total, count = _shifted_sum(luminance, window)
        local_mean = total / count
        return ImportanceMap((luminance - local_mean) ** 2)


DEFAULT_SCORER = LocalContrastScorer()


def importance_map(image: DenseImage, scorer: ImportanceScorer | None = None) -> ImportanceMap:
    """Single-channel importance map of an image."""
    if image.pixels.ndim != 3 or image.pixels.shape[2] < 1:
        raise RangeError("image must be X x Y x C with at least one channel")
    return (scorer or DEFAULT_SCORER)(image)


def neighborhood_score(importance: ImportanceMap) -> np.ndarray:
    """Mean of the in-bounds eight neighbours minus the centre value."""
    values = np.asarray(importance.values, dtype=float)
    total, count = _shifted_sum(values, NEIGHBOR_OFFSETS)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(count > 0, total / np.maximum(count, 1), values)
    return mean - values


def selection_count(shape: tuple[int, int], kappa: float) -> int:
    """floor(kappa * X * Y), never below one pixel."""
    return max(1, math.floor(kappa * (shape[0] * shape[1])))


def ranking(scores: np.ndarray) -> np.ndarray:
    """Flat pixel indices by descending score, ties by ascending row-major index."""
    flat = np.asarray(scores, dtype=float).ravel()
    return np.lexsort((np.arange(flat.size), -flat))


def top_k_select(image: DenseImage, scores: np.ndarray, kappa: float) -> SparseImage:
    """Keep the floor(kappa X Y) highest-scoring pixels."""
    if not 0 < kappa <= 1:
        raise RangeError(f"kappa must lie in (0, 1], got {kappa}")
    x, y, c = image.shape
    if scores.shape != (x, y):
        raise RangeError(f"score map shape {scores.shape} does not match image {(x, y)}")
    k = selection_count((x, y), kappa)
    indices = np.sort(ranking(scores)[:k])
    mask = np.zeros(x * y, dtype=bool)
    mask[indices] = True
    retained = image.pixels.reshape(x * y, c)[indices].copy()
    ids = None
    if image.instance_ids is not None:
        ids = np.where(mask.reshape(x, y), image.instance_ids, 0)
    return SparseImage(mask.reshape(x, y), indices, retained, kappa, (x, y, c), ids)


def gaussian_reconstruct(sparse: SparseImage, sigma: float = 1.0) -> Reconstruction:
    """Normalized Gaussian-weighted fill from retained pixels in a 5x5 window."""
    if sigma <= 0:
        raise RangeError("sigma must be positive")
    if sparse.count == 0:
        raise RangeError("reconstruction needs at least one retained pixel")
    x, y, c = sparse.source_shape
    values = np.zeros((x * y, c))
    values[sparse.indices] = sparse.retained
    values = values.reshape(x, y, c)
    present = sparse.mask.astype(float)

    weighted = np.zeros((x, y, c))
    weights = np.zeros((x, y))
    r = RECONSTRUCTION_RADIUS
    for di in range(-r, r + 1):
        for dj in range(-r, r + 1):
            kernel = math.exp(-(di * di + dj * dj) / (2.0 * sigma * sigma))
            dst_i = slice(max(0, -di), x - max(0, di))
            dst_j = slice(max(0, -dj), y - max(0, dj))
            src_i = slice(max(0, di), x - max(0, -di))
            src_j = slice(max(0, dj), y - max(0, -dj))
            w = kernel * present[src_i, src_j]
            weights[dst_i, dst_j] += w
            weighted[dst_i, dst_j] += w[:, :, None] * values[src_i, src_j]

    empty = weights == 0
    fallback = int(empty.sum())
    with np.errstate(invalid="ignore", divide="ignore"):
        result = weighted / np.where(empty, 1.0, weights)[:, :, None]
    if fallback:
        result[empty] = sparse.retained.mean(axis=0)
        metrics.RECONSTRUCTION_FALLBACKS.inc(fallback)
        logger.debug("Reconstruction used global-mean fill", pixels=fallback)
    # retained pixels pass through; interpolation fills the rest
    result[sparse.mask] = values[sparse.mask]
    return Reconstruction(DenseImage(result), fallback)


def payload_bits(shape: tuple[int, int], channels: int, kappa: float, bits: int) -> int:
    """floor(kappa X Y) * C * M."""
    if bits < 1:
        raise RangeError("bits per pixel must be >= 1")
    return selection_count(shape, kappa) * channels * bits


def data_size(sparse: SparseImage, bits: int) -> int:
    """Transmitted payload of a sparse image in bits (header excluded)."""
    x, y, c = sparse.source_shape
    return payload_bits((x, y), c, sparse.kappa, bits)


def feature_payload_bits(
    channels: int, size: tuple[int, int], kappa: float, bits: int
) -> int:
    """Payload of a sparsified BEV feature map shared between UAVs."""
    return selection_count(size, kappa) * channels * bits


def cost_ratio(proposed: float, baseline: float) -> float:
    """Relative communication cost of the proposed scheme."""
    if baseline <= 0:
        raise RangeError("baseline cost must be positive")
    return proposed / baseline


def wire_overhead_bits(count: int) -> int:
    """Bits on the wire beyond the payload: fixed header plus 32-bit indices."""
    return WIRE_HEADER_BITS + INDEX_BITS * count


def encode_wire(sparse: SparseImage, bits: int) -> tuple[bytes, int]:
    """Serialize a sparse image; returns the bytes and the exact bit count."""
    x, y, c = sparse.source_shape
    levels = (1 << bits) - 1
    quantized = np.rint(np.clip(sparse.retained, 0.0, 1.0) * levels).astype(np.uint64)
    header = _WIRE_HEADER.pack(WIRE_MAGIC, WIRE_VERSION, bits, x, y, c, sparse.kappa, sparse.count)
    header = header.ljust(WIRE_HEADER_BITS // 8, b"\0")
    index_bytes = sparse.indices.astype(">u4").tobytes()
    shifts = np.arange(bits - 1, -1, -1, dtype=np.uint64)
    value_bits = ((quantized.reshape(-1, 1) >> shifts) & 1).astype(np.uint8).ravel()
    value_bytes = np.packbits(value_bits).tobytes()
    total_bits = WIRE_HEADER_BITS + INDEX_BITS * sparse.count + value_bits.size
    return header + index_bytes + value_bytes, total_bits


def decode_wire(payload: bytes) -> SparseImage:
    """Rebuild the sparse image from its wire form."""
    try:
        magic, version, bits, x, y, c, kappa, count = _WIRE_HEADER.unpack_from(payload)
    except struct.error as exc:
        raise ArtifactFormatError(f"truncated sparse-image header: {exc}") from exc
    if magic != WIRE_MAGIC or version != WIRE_VERSION:
        raise ArtifactFormatError("not a sparse-image payload of a supported version")
    offset = WIRE_HEADER_BITS // 8
    indices = np.frombuffer(payload, dtype=">u4", count=count, offset=offset).astype(np.int64)
    offset += 4 * count
    value_bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8, offset=offset))
    value_bits = value_bits[: count * c * bits].reshape(-1, bits).astype(np.uint64)
    shifts = np.arange(bits - 1, -1, -1, dtype=np.uint64)
    quantized = (value_bits << shifts).sum(axis=1)
    retained = (quantized.astype(float) / ((1 << bits) - 1)).reshape(count, c)
    mask = np.zeros(x * y, dtype=bool)
    mask[indices] = True
    return SparseImage(mask.reshape(x, y), indices, retained, kappa, (x, y, c))
