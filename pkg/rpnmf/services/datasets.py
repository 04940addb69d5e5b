from __future__ import annotations

import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import polars as pl
import scipy.io
import scipy.sparse as sp
from sklearn.feature_extraction.text import CountVectorizer

from rpnmf.errors import InputDataError, MatrixMarketError
from rpnmf.models import DatasetFormat
from rpnmf.schemas import DatasetDescriptor, SyntheticSpec
from rpnmf.services.linalg import DenseMatrix, Matrix, SparseMatrix, as_dense, as_sparse, min_entry, thin_qr

logger = logging.getLogger(__name__)

PGM_SUFFIXES = (".pgm",)
MM_BANNER = "%%matrixmarket"


# --- dense CSV ----------------------------------------------------------------------


def load_dense_csv(path: Path, has_header: bool = False, allow_negative: bool = False) -> DenseMatrix:
    path = Path(path)
    if not path.is_file():
        raise InputDataError(f"{path}: no such file")
    try:
        # read as text first so a malformed cell names itself instead of becoming null
        frame = pl.read_csv(path, has_header=has_header, infer_schema_length=0)
        frame = frame.select(pl.all().str.strip_chars().cast(pl.Float64, strict=True))
    except pl.exceptions.PolarsError as exc:
        raise InputDataError(f"{path}: malformed CSV ({exc})") from exc
    if frame.height == 0 or frame.width == 0:
        raise InputDataError(f"{path}: CSV holds no data")
    if frame.null_count().sum_horizontal().item() > 0:
        raise InputDataError(f"{path}: CSV has empty cells")
    X = as_dense(frame.to_numpy(), name=str(path))
    if not allow_negative:
        _reject_negative(X, path)
    logger.info("loaded dense CSV %s with shape %s", path, X.shape)
    return X


def save_dense_csv(M: DenseMatrix, path: Path, header: bool = False) -> None:
    M = np.asarray(M, dtype=np.float64)
    columns = [f"c{j}" for j in range(M.shape[1])]
    pl.DataFrame(M, schema=columns, orient="row").write_csv(Path(path), include_header=header)


# --- PGM images ---------------------------------------------------------------------


def load_pgm_directory(path: Path) -> DenseMatrix:
    """Stack every PGM in ``path`` (sorted by name) as one flattened row in [0, 1]."""
    path = Path(path)
    if not path.is_dir():
        raise InputDataError(f"{path}: not a directory")
    files = sorted(p for p in path.iterdir() if p.is_file() and p.suffix.lower() in PGM_SUFFIXES)
    if not files:
        raise InputDataError(f"{path}: no PGM images found")

    rows: List[np.ndarray] = []
    shape: Optional[Tuple[int, int]] = None
    for file in files:
        image = read_pgm(file)
        if shape is None:
            shape = image.shape
        elif image.shape != shape:
            raise InputDataError(f"{file}: image is {image.shape[1]}x{image.shape[0]}, expected {shape[1]}x{shape[0]}")
        rows.append(image.ravel())
    logger.info("loaded %s images of %sx%s from %s", len(rows), shape[1], shape[0], path)
    return np.vstack(rows)


def read_pgm(path: Path) -> DenseMatrix:
    data = Path(path).read_bytes()
    magic, width, height, maxval, offset = _pgm_header(data, path)
    count = width * height
    if magic == b"P5":
        pixels = np.frombuffer(data, dtype=np.uint8, count=count, offset=offset) if len(data) - offset >= count else None
    else:
        values = data[offset:].split()
        pixels = np.array([int(v) for v in values[:count]], dtype=np.int64) if len(values) >= count else None
    if pixels is None:
        raise InputDataError(f"{path}: truncated pixel data")
    if pixels.max(initial=0) > maxval:
        raise InputDataError(f"{path}: pixel value above maxval {maxval}")
    if pixels.min(initial=0) < 0:
        raise InputDataError(f"{path}: negative pixel values are not allowed")
    return pixels.reshape(height, width).astype(np.float64) / maxval


def _pgm_header(data: bytes, path: Path) -> Tuple[bytes, int, int, int, int]:
    tokens: List[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise InputDataError(f"{path}: truncated PGM header")
        if data[pos : pos + 1] == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    magic = tokens[0]
    if magic not in (b"P2", b"P5"):
        raise InputDataError(f"{path}: not a P2/P5 PGM file")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise InputDataError(f"{path}: malformed PGM header") from exc
    if width <= 0 or height <= 0 or not 0 < maxval <= 255:
        raise InputDataError(f"{path}: unsupported PGM geometry {width}x{height} maxval {maxval}")
    # exactly one whitespace byte separates the header from binary pixels
    return magic, width, height, maxval, pos + 1


# --- Matrix Market ------------------------------------------------------------------


def load_matrix_market(path: Path, allow_negative: bool = False) -> SparseMatrix:
    path = Path(path)
    if not path.is_file():
        raise InputDataError(f"{path}: no such file")
    with path.open("rb") as handle:
        first = handle.readline().decode("ascii", errors="replace").strip()
    if not first.lower().startswith(MM_BANNER):
        raise MatrixMarketError(f"{path}: missing %%MatrixMarket banner", line=1)
    fields = first.lower().split()
    if len(fields) < 5 or fields[1] != "matrix" or fields[2] != "coordinate" or fields[3] not in ("real", "integer"):
        raise MatrixMarketError(f"{path}: expected a coordinate real or integer matrix, got '{first}'", line=1)

    try:
        with path.open("rb") as handle:
            M = scipy.io.mmread(handle)
    except Exception as exc:  # the reader raises a mix of ValueError, IndexError and backend errors
        raise MatrixMarketError(f"{path}: {exc}") from exc

    # coo -> csr sums duplicate coordinates
    X = as_sparse(sp.coo_matrix(M), name=str(path))
    if not allow_negative:
        _reject_negative(X, path)
    logger.info("loaded Matrix Market %s with shape %s, %s non-zeros", path, X.shape, X.nnz)
    return X


def save_matrix_market(M: Matrix, path: Path) -> None:
    coo = sp.coo_matrix(M, dtype=np.float64)
    # an open handle keeps mmwrite from appending ".mtx" to the name
    with Path(path).open("wb") as handle:
        scipy.io.mmwrite(handle, coo, field="real", precision=17, symmetry="general")


# --- text corpora -------------------------------------------------------------------


def load_corpus(path: Path, one_per_line: bool = False) -> List[str]:
    path = Path(path)
    if one_per_line:
        if not path.is_file():
            raise InputDataError(f"{path}: no such file")
        return path.read_text(encoding="utf-8", errors="replace").splitlines()
    if not path.is_dir():
        raise InputDataError(f"{path}: not a directory (use one-per-line for a single file)")
    files = sorted(p for p in path.iterdir() if p.is_file())
    return [p.read_text(encoding="utf-8", errors="replace") for p in files]


def build_term_frequency(
    documents: Iterable[str | Sequence[str]],
    vocab_size: int,
    max_docs: int,
) -> Tuple[SparseMatrix, List[str]]:
    """Count matrix (documents x words) over the most frequent words of the first ``max_docs`` documents."""
    if vocab_size <= 0 or max_docs <= 0:
        raise InputDataError(f"vocab_size and max_docs must be positive, got {vocab_size}, {max_docs}")
    texts = [doc if isinstance(doc, str) else " ".join(doc) for _, doc in zip(range(max_docs), documents)]
    if not any(text.split() for text in texts):
        raise InputDataError("corpus has no usable documents")

    vectorizer = CountVectorizer(tokenizer=str.split, lowercase=True, token_pattern=None)
    counts = vectorizer.fit_transform(texts)
    names = vectorizer.get_feature_names_out()  # lexicographic

    frequency = np.asarray(counts.sum(axis=0)).ravel()
    keep = np.argsort(-frequency, kind="stable")[:vocab_size]
    vocabulary = [str(names[i]) for i in keep]
    X = as_sparse(counts.tocsc()[:, keep], name="term frequency")
    logger.info("built %sx%s term-frequency matrix", X.shape[0], X.shape[1])
    return X, vocabulary


# --- synthetic data -----------------------------------------------------------------


def synthetic_spectrum(spec: SyntheticSpec) -> np.ndarray:
    return np.arange(1, spec.true_rank + 1, dtype=np.float64) ** (-spec.spectrum_decay)


def generate_synthetic(spec: SyntheticSpec) -> DenseMatrix:
    rng = np.random.default_rng(spec.seed)
    U, _ = thin_qr(rng.standard_normal((spec.d, spec.true_rank)))
    V, _ = thin_qr(rng.standard_normal((spec.n, spec.true_rank)))
    X = (U * synthetic_spectrum(spec)) @ V.T
    if spec.noise_level > 0:
        X = X + rng.normal(0.0, spec.noise_level, size=X.shape)
    else:
        X = X - min(float(X.min()), 0.0)
    return np.maximum(X, 0.0)


# --- dispatch -----------------------------------------------------------------------


def load_dataset(descriptor: DatasetDescriptor) -> Matrix:
    fmt = descriptor.format
    if fmt == DatasetFormat.csv:
        X = load_dense_csv(descriptor.path, has_header=descriptor.has_header)
    elif fmt == DatasetFormat.mm:
        X = load_matrix_market(descriptor.path)
    elif fmt == DatasetFormat.pgm_dir:
        X = load_pgm_directory(descriptor.path)
    elif fmt == DatasetFormat.corpus:
        documents = load_corpus(descriptor.path, one_per_line=descriptor.one_per_line)
        X, _ = build_term_frequency(documents, descriptor.vocab_size, descriptor.max_docs)
    else:
        X = generate_synthetic(descriptor.synthetic)
    if descriptor.expected_dims is not None and tuple(X.shape) != tuple(descriptor.expected_dims):
        raise InputDataError(f"{descriptor.name}: expected shape {descriptor.expected_dims}, got {X.shape}")
    logger.info("dataset %s (%s, %s) has shape %s", descriptor.name, descriptor.format.value, descriptor.kind.value, X.shape)
    return X


def _reject_negative(X: Matrix, source: Path) -> None:
    if min_entry(X) < 0:
        raise InputDataError(f"{source}: negative entries are not allowed")
