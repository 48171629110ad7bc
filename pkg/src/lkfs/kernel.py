"""Gaussian Gram matrices, Frobenius inner products and kernel alignment."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataio import ExpressionMatrix
from .errors import ConfigError, DataValidationError, NumericalError

BANDWIDTH_MODES = ("per-feature", "global")


@dataclass(frozen=True)
class KernelMatrix:
    """Symmetric PSD similarity matrix with unit diagonal.

    ``source`` records provenance: "latent", "feature:<index>", "combined" or
    "data". Kernels built from a constant column are flagged ``degenerate`` and
    are excluded from selection.
    """

    entries: np.ndarray
    bandwidth: float
    source: str = "data"
    degenerate: bool = False

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.float64)
        object.__setattr__(self, "entries", entries)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise DataValidationError(f"kernel must be square, got shape {entries.shape}")

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def pairwise_sqdist(points: np.ndarray) -> np.ndarray:
    """Exact n x n squared Euclidean distances (row-by-row differences)."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = pts.shape[0]
    out = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        diff = pts - pts[i]
        out[i] = (diff * diff).sum(axis=1)
    return out


def median_bandwidth(points: np.ndarray) -> float:
    """Median of the n(n-1)/2 pairwise Euclidean distances."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] < 2:
        raise DataValidationError("median_bandwidth needs at least 2 points")
    dists = np.sqrt(pairwise_sqdist(pts)[np.triu_indices(pts.shape[0], 1)])
    if dists.max() == 0.0:
        raise NumericalError("all pairwise distances are zero; kernel would be degenerate")
    return float(np.median(dists))


def gaussian_kernel(points: np.ndarray, sigma: float, source: str = "data") -> KernelMatrix:
    """K[i][j] = exp(-||x_i - x_j||^2 / (2 sigma^2)); symmetric, unit diagonal."""
    if sigma <= 0:
        raise ConfigError(f"sigma must be > 0, got {sigma}")
    pts = np.asarray(points, dtype=np.float64)
    if not np.isfinite(pts).all():
        raise DataValidationError("gaussian_kernel input contains non-finite values")
    entries = np.exp(-pairwise_sqdist(pts) / (2.0 * sigma * sigma))
    np.fill_diagonal(entries, 1.0)
    return KernelMatrix(entries, bandwidth=float(sigma), source=source)


def feature_kernels(X: ExpressionMatrix, bandwidth_mode: str = "per-feature") -> list[KernelMatrix]:
    """One Gaussian kernel per feature column.

    With ``bandwidth_mode="per-feature"`` (default) each kernel uses the median
    heuristic on its own column; "global" applies a single bandwidth computed
    on the full matrix. Constant columns yield flagged degenerate kernels.
    """
    if bandwidth_mode not in BANDWIDTH_MODES:
        raise ConfigError(f"bandwidth_mode must be one of {BANDWIDTH_MODES}")
    if X.n < 2:
        raise DataValidationError("feature kernels need at least 2 samples")
    global_sigma = median_bandwidth(X.values) if bandwidth_mode == "global" else None
    kernels = []
    for j in range(X.d):
        col = X.values[:, j]
        if col.max() == col.min():
            kernels.append(
                KernelMatrix(
                    np.ones((X.n, X.n)),
                    bandwidth=float("nan"),
                    source=f"feature:{j}",
                    degenerate=True,
                )
            )
            continue
        sigma = global_sigma if global_sigma is not None else median_bandwidth(col)
        kernels.append(gaussian_kernel(col, sigma, source=f"feature:{j}"))
    return kernels


def frobenius_inner(K1: KernelMatrix | np.ndarray, K2: KernelMatrix | np.ndarray) -> float:
    """Entrywise inner product sum_ij K1[i][j] * K2[i][j]."""
    a = K1.entries if isinstance(K1, KernelMatrix) else np.asarray(K1, dtype=np.float64)
    b = K2.entries if isinstance(K2, KernelMatrix) else np.asarray(K2, dtype=np.float64)
    if a.shape != b.shape:
        raise DataValidationError(f"kernel dimension mismatch: {a.shape} vs {b.shape}")
    return float((a * b).sum())


def alignment(K1: KernelMatrix | np.ndarray, K2: KernelMatrix | np.ndarray) -> float:
    """Normalized Frobenius inner product <K1,K2> / sqrt(<K1,K1><K2,K2>)."""
    num = frobenius_inner(K1, K2)
    den = frobenius_inner(K1, K1) * frobenius_inner(K2, K2)
    if den <= 0.0:
        raise NumericalError("alignment undefined: a kernel has zero Frobenius norm")
    return num / float(np.sqrt(den))


def save_kernel(K: KernelMatrix, path: str | Path, binary: bool = True) -> None:
    """Dump the dense matrix: binary little-endian float64 behind an 8-byte
    unsigned size header, or tab-delimited text."""
    path = Path(path)
    if binary:
        with path.open("wb") as fh:
            fh.write(struct.pack("<Q", K.n))
            fh.write(K.entries.astype("<f8").tobytes(order="C"))
    else:
        lines = ["\t".join(repr(float(v)) for v in row) for row in K.entries]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_kernel(path: str | Path) -> KernelMatrix:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) >= 8:
        (n,) = struct.unpack_from("<Q", raw, 0)
        if len(raw) == 8 + 8 * n * n:
            entries = np.frombuffer(raw, dtype="<f8", offset=8).reshape(n, n).copy()
            return KernelMatrix(entries, bandwidth=float("nan"), source="loaded")
    rows = [
        [float(c) for c in line.split("\t")]
        for line in raw.decode("utf-8").splitlines()
        if line.strip()
    ]
    return KernelMatrix(np.array(rows), bandwidth=float("nan"), source="loaded")
