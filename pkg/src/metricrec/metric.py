"""Weighted (Mahalanobis) distances and the algebra that keeps the weight
matrices valid metrics.

All users and items live in one k-dimensional latent space; user-user,
item-item and user-item relationships are measured by quadratic forms
``(e_a - e_b)^T W (e_a - e_b)`` under three separately learned symmetric
positive semi-definite matrices.  With ``W = I`` everything reduces to
plain Euclidean geometry.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, NumericalError

SYMMETRY_TOL = 1e-9
PSD_EIG_TOL = -1e-8
_QUADFORM_NOISE_FLOOR = -1e-12

_METRIC_MAGIC = b"MRWM"


@dataclass
class EmbeddingTable:
    """Unified latent vectors: users occupy rows [0, m), items [m, m+n)."""

    num_users: int
    num_items: int
    dim: int
    vectors: np.ndarray

    @classmethod
    def zeros(cls, num_users, num_items, dim):
        return cls(num_users, num_items, dim,
                   np.zeros((num_users + num_items, dim), dtype=np.float64))

    @property
    def num_entities(self):
        return self.num_users + self.num_items

    def user_row(self, user):
        return int(user)

    def item_row(self, item):
        return self.num_users + int(item)

    def user_vec(self, user):
        return self.vectors[user]

    def item_vec(self, item):
        return self.vectors[self.num_users + item]

    def user_matrix(self):
        return self.vectors[: self.num_users]

    def item_matrix(self):
        return self.vectors[self.num_users:]

    def validate(self):
        if self.vectors.shape != (self.num_entities, self.dim):
            raise ValueError("embedding table shape mismatch")
        if not np.all(np.isfinite(self.vectors)):
            raise NumericalError("embedding table contains non-finite values")
        norms2 = np.einsum("ij,ij->i", self.vectors, self.vectors)
        if np.any(norms2 >= 1.0):
            raise NumericalError("embedding rows escaped the open unit ball")


@dataclass
class MetricSet:
    """The three learned k x k weight matrices (user, item, user-item)."""

    w_user: np.ndarray
    w_item: np.ndarray
    w_user_item: np.ndarray

    @classmethod
    def identity(cls, dim):
        return cls(np.eye(dim), np.eye(dim), np.eye(dim))

    @property
    def dim(self):
        return int(self.w_user.shape[0])

    @property
    def tied(self):
        return self.w_user is self.w_item and self.w_item is self.w_user_item

    def matrices(self):
        return {"w_user": self.w_user, "w_item": self.w_item,
                "w_user_item": self.w_user_item}

    def validate(self):
        for name, w in self.matrices().items():
            if w.shape != (self.dim, self.dim):
                raise ValueError(f"{name} has shape {w.shape}")
            if not np.all(np.isfinite(w)):
                raise NumericalError(f"{name} contains non-finite values")
            if np.max(np.abs(w - w.T)) > SYMMETRY_TOL:
                raise NumericalError(f"{name} is not symmetric within {SYMMETRY_TOL}")
            eigmin = float(np.linalg.eigvalsh(w)[0])
            if eigmin < PSD_EIG_TOL:
                raise NumericalError(
                    f"{name} has negative eigenvalue {eigmin:.3e}")


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"vector shape mismatch: {a.shape} vs {b.shape}")
    if np.isnan(a).any() or np.isnan(b).any():
        raise NumericalError("NaN in distance input")
    return a, b


def squared_w_distance(a, b, w):
    """Quadratic form ``(a-b)^T W (a-b)``, clamped at zero.

    The clamp absorbs float noise: with a PSD ``w`` the exact value is
    non-negative, but eigendecomposition round-trips can leave residues on
    the order of -1e-16.
    """
    a, b = _check_pair(a, b)
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (a.shape[0], a.shape[0]):
        raise ValueError(f"weight matrix shape {w.shape} does not match dim {a.shape[0]}")
    if np.isnan(w).any():
        raise NumericalError("NaN in weight matrix")
    d = a - b
    q = float(d @ w @ d)
    if q < _QUADFORM_NOISE_FLOOR:
        # Larger negatives mean the caller handed us a non-PSD matrix;
        # still clamp, the validate() path is where that gets rejected.
        return 0.0
    return max(q, 0.0)


def w_distance(a, b, w):
    """Weighted metric distance ``sqrt((a-b)^T W (a-b))``."""
    return float(np.sqrt(squared_w_distance(a, b, w)))


def euclidean_distance(a, b):
    a, b = _check_pair(a, b)
    return float(np.linalg.norm(a - b))


def squared_w_cdist(x, y, w):
    """All-pairs squared weighted distances between row sets x and y.

    Expands the quadratic form as xWx + yWy - 2 xWy to avoid materializing
    difference tensors; clamps tiny negative residues at zero.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xw = x @ w
    yw = y @ w
    sq = (np.einsum("ij,ij->i", xw, x)[:, None]
          + np.einsum("ij,ij->i", yw, y)[None, :]
          - xw @ y.T - x @ yw.T)
    np.maximum(sq, 0.0, out=sq)
    return sq


def w_cdist(x, y, w):
    return np.sqrt(squared_w_cdist(x, y, w))


def project_psd(w):
    """Nearest symmetric PSD matrix in Frobenius norm.

    Symmetrizes, clips negative eigenvalues at zero and recomposes; the
    result is re-symmetrized to kill recomposition noise.  Idempotent.
    """
    w = np.asarray(w, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise NumericalError("cannot project non-finite matrix")
    sym = 0.5 * (w + w.T)
    try:
        eigvals, eigvecs = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    if eigvals[0] >= 0.0:
        return sym
    # Recomposition round-off scales with the matrix norm; lift the clipped
    # eigenvalues just above it so the result is PSD at any scale.
    floor = 16.0 * np.finfo(np.float64).eps * float(np.abs(eigvals).max())
    clipped = np.maximum(eigvals, floor)
    out = (eigvecs * clipped) @ eigvecs.T
    return 0.5 * (out + out.T)


def save_metrics_binary(metrics, path):
    """Flat little-endian block: 16-byte header (magic, k, count) + matrices."""
    mats = [metrics.w_user, metrics.w_item, metrics.w_user_item]
    header = struct.pack("<4sIII", _METRIC_MAGIC, metrics.dim, len(mats), 0)
    with open(path, "wb") as fh:
        fh.write(header)
        for m in mats:
            fh.write(np.ascontiguousarray(m, dtype="<f8").tobytes())


def load_metrics_binary(path):
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16:
            raise DataFormatError(f"{path}: truncated metric header")
        magic, dim, count, _ = struct.unpack("<4sIII", header)
        if magic != _METRIC_MAGIC:
            raise DataFormatError(f"{path}: bad magic {magic!r}")
        if count != 3:
            raise DataFormatError(f"{path}: expected 3 matrices, found {count}")
        raw = fh.read(count * dim * dim * 8)
    if len(raw) != count * dim * dim * 8:
        raise DataFormatError(f"{path}: truncated metric payload")
    block = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(count, dim, dim)
    return MetricSet(block[0].copy(), block[1].copy(), block[2].copy())


def save_metrics_text(metrics, path):
    """Human-readable alternative: one row per line, blank line between matrices."""
    mats = [metrics.w_user, metrics.w_item, metrics.w_user_item]
    with open(path, "w", encoding="utf-8") as fh:
        for idx, m in enumerate(mats):
            if idx:
                fh.write("\n")
            for row in m:
                fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def load_metrics_text(path):
    blocks, current = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            stripped = line.strip()
            if not stripped:
                if current:
                    blocks.append(current)
                    current = []
                continue
            current.append([float(v) for v in stripped.split()])
    if current:
        blocks.append(current)
    if len(blocks) != 3:
        raise DataFormatError(f"{path}: expected 3 matrix blocks, found {len(blocks)}")
    mats = [np.asarray(b, dtype=np.float64) for b in blocks]
    for m in mats:
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DataFormatError(f"{path}: non-square matrix block {m.shape}")
    return MetricSet(*mats)
