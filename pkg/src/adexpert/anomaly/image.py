"""Image gate: linear (PCA) reconstruction of flattened grayscale images,
flagging reconstruction MSE above a threshold."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from adexpert.datamodel import DataError, parse_number
from adexpert.mlcore.pca import PCAModel, fit_pca, project, reconstruct

DEFAULT_MSE_THRESHOLD = 0.01


@dataclass(frozen=True)
class ImageGateModel:
    reconstruction: PCAModel
    input_size: tuple[int, int]
    mse_threshold: float = DEFAULT_MSE_THRESHOLD

    def __post_init__(self):
        if not self.mse_threshold > 0:
            raise ValueError("mse_threshold must be > 0")


@dataclass(frozen=True)
class ImageCheck:
    mse: float
    flagged: bool
    threshold: float

    def __iter__(self):
        # unpacks as (mse, flagged)
        return iter((self.mse, self.flagged))


def _validate(image, size: tuple[int, int] | None = None) -> np.ndarray:
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise DataError(f"image must be a 2-D pixel matrix, got shape {img.shape}")
    if size is not None and img.shape != tuple(size):
        raise DataError(f"image size {img.shape} does not match model input size {tuple(size)}")
    if not np.all(np.isfinite(img)) or img.min() < 0.0 or img.max() > 1.0:
        raise DataError("pixel values must be normalized to [0, 1]")
    return img


def fit_image_gate(images: Sequence, k: int, mse_threshold: float = DEFAULT_MSE_THRESHOLD) -> ImageGateModel:
    if len(images) < 2:
        raise DataError("image gate needs at least 2 training images")
    imgs = [_validate(im) for im in images]
    size = imgs[0].shape
    for i, im in enumerate(imgs):
        if im.shape != size:
            raise DataError(f"image {i} has size {im.shape}, expected {size}")
    X = np.stack([im.reshape(-1) for im in imgs])
    return ImageGateModel(fit_pca(X, k), (int(size[0]), int(size[1])), float(mse_threshold))


def reconstruction_mse(model: ImageGateModel, image) -> float:
    x = _validate(image, model.input_size).reshape(1, -1)
    x_hat = reconstruct(model.reconstruction, project(model.reconstruction, x))
    return float(np.mean((x - x_hat) ** 2))


def image_anomaly(model: ImageGateModel, image) -> ImageCheck:
    mse = reconstruction_mse(model, image)
    return ImageCheck(mse, mse > model.mse_threshold, model.mse_threshold)


def salt_and_pepper(image, fraction: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    out = np.array(image, dtype=float, copy=True)
    hit = rng.random(out.shape) < fraction
    out[hit] = rng.integers(0, 2, size=int(hit.sum())).astype(float)
    return out


# --- file formats -------------------------------------------------------


def _pgm_tokens(data: bytes, count: int, pos: int) -> tuple[list[bytes], int]:
    tokens = []
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos


def read_pgm(path: str | Path) -> np.ndarray:
    """Read a P2 (ASCII) or P5 (binary) PGM, scaled to [0, 1]."""
    data = Path(path).read_bytes()
    (magic, w, h, maxval), pos = _pgm_tokens(data, 4, 0)
    w, h, maxval = int(w), int(h), int(maxval)
    if magic == b"P2":
        pix, _ = _pgm_tokens(data, w * h, pos)
        arr = np.array([int(t) for t in pix], dtype=float)
    elif magic == b"P5":
        pos += 1  # single whitespace byte after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        arr = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos).astype(float)
    else:
        raise DataError(f"{path}: not a P2/P5 PGM file")
    return arr.reshape(h, w) / maxval


def write_pgm(path: str | Path, image, maxval: int = 255) -> None:
    """Write an ASCII (P2) PGM from pixels in [0, 1]."""
    img = _validate(image)
    q = np.rint(img * maxval).astype(int)
    h, w = q.shape
    lines = ["P2", f"{w} {h}", str(maxval)] + [" ".join(str(v) for v in row) for row in q]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_pixel_csv(path: str | Path) -> np.ndarray:
    rows = []
    for row_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append([parse_number(c) for c in line.split(",")])
        except ValueError as exc:
            raise DataError(f"{path}: row {row_no}: {exc}") from None
    if len({len(r) for r in rows}) != 1:
        raise DataError(f"{path}: ragged pixel rows")
    return np.array(rows)


def read_image(path: str | Path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)
    return _validate(read_pixel_csv(path))


def corpus_dir() -> Path:
    return Path(str(resources.files("adexpert") / "data" / "image_corpus"))


def load_corpus(split: str) -> list[np.ndarray]:
    """Shipped smooth-gradient corpus; ``split`` is ``"train"`` or ``"heldout"``."""
    return [read_pgm(p) for p in sorted(corpus_dir().glob(f"{split}_*.pgm"))]
