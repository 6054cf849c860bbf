"""Data acquisition: LIBSVM text, PGM images, Gaussian noise, grid partitions."""
from __future__ import annotations

import hashlib
import io
import logging
import re
import urllib.request
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

log = logging.getLogger(__name__)

LIBSVM_URL = "https://www.csie.ntu.edu.tw/~cjlin/libsvmtools/datasets/binary/{name}"

# (instances, features) of the binary datasets used for adversarial training
DATASETS = {
    "mushrooms": (8124, 112),
    "a9a": (32561, 123),
    "w8a": (49749, 300),
}


class LibSVMFormatError(ValueError):
    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class SparseDataset:
    X: sparse.csr_matrix
    y: np.ndarray

    @property
    def n_samples(self):
        return self.X.shape[0]

    @property
    def n_features(self):
        return self.X.shape[1]


def parse_libsvm(source, n_features=None, zero_one_labels=False) -> SparseDataset:
    """Parse ``label idx:val idx:val ...`` lines (1-based, strictly increasing indices).

    ``source`` may be a string, bytes, a path or any iterable of lines.  Text
    after ``#`` is ignored.  The feature dimension is the largest index seen,
    or ``n_features`` if that is larger.  With ``zero_one_labels`` the labels
    ``-1``/``+1`` become ``0``/``1``.
    """
    if _is_file(source):
        with open(source, encoding="utf-8") as fh:
            return parse_libsvm(fh, n_features, zero_one_labels)
    labels, indptr, indices, values = [], [0], [], []
    max_index = 0
    for lineno, raw in enumerate(_lines(source), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise LibSVMFormatError(lineno, f"bad label {tokens[0]!r}") from None
        prev = 0
        for tok in tokens[1:]:
            idx, sep, val = tok.partition(":")
            if not sep:
                raise LibSVMFormatError(lineno, f"expected index:value, got {tok!r}")
            try:
                j, v = int(idx), float(val)
            except ValueError:
                raise LibSVMFormatError(lineno, f"malformed pair {tok!r}") from None
            if j < 1:
                raise LibSVMFormatError(lineno, f"feature indices are 1-based, got {j}")
            if j <= prev:
                raise LibSVMFormatError(lineno, f"index {j} does not increase after {prev}")
            prev = j
            indices.append(j - 1)
            values.append(v)
        max_index = max(max_index, prev)
        labels.append(label)
        indptr.append(len(indices))
    if not labels:
        raise LibSVMFormatError(0, "no samples found")
    d = max(max_index, n_features or 0, 1)
    X = sparse.csr_matrix(
        (np.array(values, dtype=float), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
        shape=(len(labels), d),
    )
    y = np.array(labels, dtype=float)
    if zero_one_labels:
        y = np.where(y > 0, 1.0, 0.0)
    return SparseDataset(X, y)


def _is_file(source):
    if isinstance(source, Path):
        return True
    if not isinstance(source, str) or "\n" in source:
        return False
    try:
        return Path(source).is_file()
    except OSError:
        return False


def _lines(source):
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8"))
    if isinstance(source, str):
        return io.StringIO(source)
    return source


# -- PGM ----------------------------------------------------------------------

class PGMError(ValueError):
    pass


_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def load_pgm(data) -> np.ndarray:
    """Decode a P2 or P5 graymap into an ``H x W`` array scaled to ``[0, 1]``."""
    if isinstance(data, (str, Path)):
        data = Path(data).read_bytes()
    pos = 0
    header = []
    for _ in range(4):
        m = _TOKEN.match(data, pos)
        if not m:
            raise PGMError("truncated header")
        header.append(m.group(1))
        pos = m.end()
    magic = header[0]
    if magic not in (b"P2", b"P5"):
        raise PGMError(f"unsupported magic {magic!r}")
    try:
        W, H, maxval = (int(t) for t in header[1:])
    except ValueError:
        raise PGMError("malformed header") from None
    if W < 1 or H < 1 or not 0 < maxval <= 65535:
        raise PGMError(f"invalid header values {W}x{H}, maxval {maxval}")
    count = W * H
    if magic == b"P2":
        body = data[pos:].split()
        if len(body) < count:
            raise PGMError(f"expected {count} samples, found {len(body)}")
        pix = np.array([int(t) for t in body[:count]], dtype=float)
    else:
        pos += 1  # single whitespace after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = count * dtype.itemsize
        if len(data) - pos < need:
            raise PGMError("truncated payload")
        pix = np.frombuffer(data, dtype=dtype, count=count, offset=pos).astype(float)
    if np.any(pix > maxval):
        raise PGMError("sample exceeds maxval")
    return (pix / maxval).reshape(H, W)


def save_pgm(image, maxval=255, binary=True) -> bytes:
    """Encode ``image`` (values in ``[0, 1]``, clipped) as P5 or P2."""
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise ValueError("expected a 2-D image")
    if not 0 < maxval <= 65535:
        raise ValueError("maxval must lie in (0, 65535]")
    H, W = img.shape
    q = np.rint(np.clip(img, 0.0, 1.0) * maxval).astype(np.int64)
    if binary:
        dtype = ">u2" if maxval > 255 else "u1"
        return f"P5\n{W} {H}\n{maxval}\n".encode() + q.astype(dtype).tobytes()
    rows = "\n".join(" ".join(str(v) for v in row) for row in q)
    return f"P2\n{W} {H}\n{maxval}\n{rows}\n".encode()


def add_gaussian_noise(image, sigma, seed=50):
    """Add i.i.d. ``N(0, sigma^2)`` noise. No clamping."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    img = np.asarray(image, dtype=float)
    if sigma == 0:
        return img.copy()
    rng = np.random.default_rng(seed)
    return img + sigma * rng.standard_normal(img.shape)


def partition_grid(H, W, b):
    """Flat row-major pixel indices of the ``b x b`` blocks, in row-major block order."""
    if b < 1 or H % b or W % b:
        raise ValueError(f"block side {b} must divide the {H}x{W} grid")
    idx = np.arange(H * W).reshape(H, W)
    return [
        idx[r : r + b, c : c + b].ravel()
        for r in range(0, H, b)
        for c in range(0, W, b)
    ]


def shapes_image(size=64):
    """Piecewise-constant test image: a square, a disc and a bar on a grey background."""
    yy, xx = np.mgrid[0:size, 0:size] / size
    img = np.full((size, size), 0.2)
    img[(yy > 0.15) & (yy < 0.45) & (xx > 0.1) & (xx < 0.45)] = 0.9
    img[(yy - 0.65) ** 2 + (xx - 0.65) ** 2 < 0.2**2] = 0.6
    img[(yy > 0.7) & (yy < 0.85) & (xx > 0.08) & (xx < 0.4)] = 0.0
    return img


# -- datasets -----------------------------------------------------------------

def dataset_path(name, data_dir="data"):
    return Path(data_dir) / f"{name}.libsvm"


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def fetch_dataset(name, data_dir="data", url=None):
    """Download a LIBSVM dataset to ``data_dir/<name>.libsvm`` with a checksum file.

    An existing file is kept if it matches its recorded checksum.
    """
    path = dataset_path(name, data_dir)
    digest_path = path.with_suffix(".sha256")
    if path.exists() and digest_path.exists():
        expected = digest_path.read_text().split()[0]
        if sha256_file(path) == expected:
            log.info("%s already present", path)
            return path
        raise ValueError(f"checksum mismatch for {path}; delete it to re-download")
    path.parent.mkdir(parents=True, exist_ok=True)
    url = url or LIBSVM_URL.format(name=name)
    log.info("downloading %s", url)
    with urllib.request.urlopen(url, timeout=120) as resp:
        payload = resp.read()
    if url.endswith(".bz2"):
        import bz2

        payload = bz2.decompress(payload)
    path.write_bytes(payload)
    digest_path.write_text(f"{hashlib.sha256(payload).hexdigest()}  {path.name}\n")
    return path


def load_dataset(name, data_dir="data") -> SparseDataset:
    """Parse a fetched dataset, using its documented feature count when known."""
    path = dataset_path(name, data_dir)
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run `visolve fetch-data {name}`")
    declared = DATASETS.get(name, (None, None))[1]
    return parse_libsvm(path, n_features=declared)
