"""Descriptor files: CSV with a ``# key=value`` header line, plus PGM previews."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

METHODS = ("rici", "si", "3dsc")


@dataclass
class DescriptorFile:
    method: str
    bins: np.ndarray
    meta: dict = field(default_factory=dict)

    def compatible_with(self, other: "DescriptorFile") -> bool:
        return self.method == other.method and self.bins.shape == other.bins.shape and self.meta == other.meta


def _header(method: str, meta: dict) -> str:
    return "# method=" + method + "".join(f" {k}={v}" for k, v in meta.items()) + "\n"


def write_descriptor_csv(path, method: str, bins: np.ndarray, meta: dict) -> Path:
    """Write one descriptor.

    RICI and spin images are written row-major, one image row per line
    (row 0 is the lowest beta). Shape contexts are written as ``j,k,l,value``
    lines.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_header(method, meta))
        if method == "3dsc":
            fh.write("j,k,l,value\n")
            for (j, k, l), v in np.ndenumerate(bins):
                fh.write(f"{j},{k},{l},{float(v)!r}\n")
        elif method == "rici":
            for row in np.asarray(bins, dtype=np.int64):
                fh.write(",".join(str(int(x)) for x in row) + "\n")
        else:
            for row in np.asarray(bins, dtype=np.float64):
                fh.write(",".join(repr(float(x)) for x in row) + "\n")
    return path


def _parse_header(line: str) -> tuple[str, dict]:
    if not line.startswith("#"):
        raise ValueError("descriptor file lacks a '# method=...' header")
    items = dict(tok.split("=", 1) for tok in line[1:].split())
    method = items.pop("method", None)
    if method not in METHODS:
        raise ValueError(f"unknown descriptor method {method!r}")
    return method, items


def read_descriptor_csv(path) -> DescriptorFile:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        method, meta = _parse_header(fh.readline())
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    if method == "3dsc":
        if lines and lines[0].startswith("j"):
            lines = lines[1:]
        shape = (int(meta["azimuth_bins"]), int(meta["elevation_bins"]), int(meta["radial_bins"]))
        bins = np.zeros(shape)
        for ln in lines:
            j, k, l, v = ln.split(",")
            bins[int(j), int(k), int(l)] = float(v)
    else:
        dtype = np.int64 if method == "rici" else np.float64
        conv = int if method == "rici" else float
        bins = np.array([[conv(x) for x in ln.split(",")] for ln in lines], dtype=dtype)
        n = int(meta.get("resolution", len(bins)))
        if bins.shape != (n, n):
            raise ValueError(f"{path}: expected a {n}x{n} image, found {bins.shape}")
    return DescriptorFile(method, bins, meta)


def write_pgm(path, image: np.ndarray, normalise: bool) -> Path:
    """8-bit binary PGM; values clamped to 255, or scaled to the image maximum."""
    img = np.asarray(image, dtype=np.float64)
    if normalise:
        peak = img.max()
        img = img * (255.0 / peak) if peak > 0 else np.zeros_like(img)
    data = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{data.shape[1]} {data.shape[0]}\n255\n".encode("ascii"))
        fh.write(data.tobytes())
    return path
