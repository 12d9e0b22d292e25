"""On-disk precompute bundle: spectral basis + dataset statistics.

Layout (all binary files little-endian float64, row-major):

    manifest.json   version, counts, selection mode, per-attribute selected
                    component indices, vertex labels, file checksums
    basis.bin       per attribute w in order: U*_w (N_w x kappa), then
                    mean m*_w (kappa), then std s*_w (kappa)
    stats.bin       mean M (N x 3), std Sigma (N x 3), normals (N x 3)
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .mesh import AttributeSegmentation, DatasetStats
from .spectral import SpectralBasis, SpectralError

BUNDLE_VERSION = 1


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def save_bundle(basis: SpectralBasis, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stats = basis.stats
    chunks = []
    for w in range(basis.attribute_count):
        chunks += [basis.vectors[w].ravel(), basis.mean[w], basis.std[w]]
    (directory / "basis.bin").write_bytes(
        np.concatenate(chunks).astype("<f8").tobytes()
    )
    (directory / "stats.bin").write_bytes(
        np.concatenate([stats.mean.ravel(), stats.std.ravel(), stats.normals.ravel()])
        .astype("<f8")
        .tobytes()
    )
    manifest = {
        "version": BUNDLE_VERSION,
        "attribute_count": basis.attribute_count,
        "kappa": basis.kappa,
        "num_modes": basis.num_modes,
        "selection": basis.selection,
        "vertex_count": int(stats.mean.shape[0]),
        "labels": basis.segmentation.labels.tolist(),
        "attributes": [
            {
                "size": int(len(basis.segmentation.indices[w])),
                "selected": basis.selected[w].tolist(),
                "eigenvalues": basis.eigenvalues[w].tolist(),
            }
            for w in range(basis.attribute_count)
        ],
        "checksums": {
            "basis.bin": _sha256(directory / "basis.bin"),
            "stats.bin": _sha256(directory / "stats.bin"),
        },
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=1), encoding="utf-8")


def load_bundle(directory: str | Path) -> SpectralBasis:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    if manifest.get("version") != BUNDLE_VERSION:
        raise SpectralError(f"unsupported bundle version {manifest.get('version')}")
    for name, expected in manifest["checksums"].items():
        actual = _sha256(directory / name)
        if actual != expected:
            raise SpectralError(f"checksum mismatch for {name}")
    n = manifest["vertex_count"]
    kappa = manifest["kappa"]
    labels = np.array(manifest["labels"], dtype=np.int64)
    segmentation = AttributeSegmentation.from_labels(labels)
    stats_raw = np.frombuffer((directory / "stats.bin").read_bytes(), dtype="<f8")
    if stats_raw.size != 9 * n:
        raise SpectralError("stats.bin size mismatch")
    mean, std, normals = (a.reshape(n, 3).copy() for a in np.split(stats_raw, 3))
    stats = DatasetStats(mean=mean, std=std, normals=normals)
    basis_raw = np.frombuffer((directory / "basis.bin").read_bytes(), dtype="<f8")
    vectors, selected, means, stds, eigvals = [], [], [], [], []
    offset = 0
    for w, attr in enumerate(manifest["attributes"]):
        size = attr["size"]
        if size != len(segmentation.indices[w]):
            raise SpectralError(f"attribute {w} size mismatch with labels")
        u = basis_raw[offset : offset + size * kappa].reshape(size, kappa).copy()
        offset += size * kappa
        m = basis_raw[offset : offset + kappa].copy()
        offset += kappa
        s = basis_raw[offset : offset + kappa].copy()
        offset += kappa
        vectors.append(u)
        means.append(m)
        stds.append(s)
        selected.append(np.array(attr["selected"], dtype=np.int64))
        eigvals.append(np.array(attr["eigenvalues"], dtype=np.float64))
    if offset != basis_raw.size:
        raise SpectralError("basis.bin size mismatch")
    return SpectralBasis(
        segmentation=segmentation,
        stats=stats,
        vectors=tuple(vectors),
        selected=tuple(selected),
        mean=tuple(means),
        std=tuple(stds),
        eigenvalues=tuple(eigvals),
        kappa=kappa,
        num_modes=manifest["num_modes"],
        selection=manifest["selection"],
    )
