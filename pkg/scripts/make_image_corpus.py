"""Regenerate the shipped smooth-gradient image corpus.

Each image is a linear brightness ramp at a random angle, quantized to
8-bit PGM. Run from the repository root:

    python scripts/make_image_corpus.py
"""

from pathlib import Path

import numpy as np

from adexpert.anomaly.image import write_pgm

SIZE = 32
N_TRAIN = 24
N_HELDOUT = 8
SEED = 20240501


def gradient(rng: np.random.Generator) -> np.ndarray:
    u, v = np.meshgrid(np.linspace(-1, 1, SIZE), np.linspace(-1, 1, SIZE))
    theta = rng.uniform(0, 2 * np.pi)
    base = rng.uniform(0.35, 0.65)
    amp = rng.uniform(0.1, 0.3) / np.sqrt(2)
    return base + amp * (np.cos(theta) * u + np.sin(theta) * v)


def main() -> None:
    out = Path(__file__).resolve().parents[1] / "src" / "adexpert" / "data" / "image_corpus"
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(SEED)
    for i in range(N_TRAIN):
        write_pgm(out / f"train_{i:02d}.pgm", gradient(rng))
    for i in range(N_HELDOUT):
        write_pgm(out / f"heldout_{i:02d}.pgm", gradient(rng))


if __name__ == "__main__":
    main()
