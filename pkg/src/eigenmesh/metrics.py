"""Generation-quality and disentanglement metrics.

Set-level metrics (JSD, MMD, COV, 1-NNA) compare vertex clouds under the
squared symmetric Chamfer distance. Disentanglement is quantified by the
variation-predictability score (few-shot classifier guessing the perturbed
latent) and by per-attribute latent traversal distance profiles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from . import autodiff as ad
from .autodiff import Tape, Tensor, backward
from .mesh import AttributeSegmentation
from .networks import Discriminator
from .optim import Adam


class MetricError(ValueError):
    pass


def mean_reconstruction(model, test_vertices: np.ndarray, batch: int = 32) -> float:
    """Mean per-vertex L2 distance between inputs and reconstructions."""
    if getattr(model, "encoder", None) is None:
        raise MetricError("reconstruction metric needs an encoder (VAE model)")
    test_vertices = np.asarray(test_vertices, dtype=np.float64)
    total = 0.0
    for start in range(0, len(test_vertices), batch):
        chunk = test_vertices[start : start + batch]
        mu, _ = model.encode(chunk)
        recon = model.generate(mu)
        total += float(np.linalg.norm(recon - chunk, axis=2).mean(axis=1).sum())
    return total / len(test_vertices)


def diversity(model, n_samples: int, seed: int, max_pairs: int = 1000,
              batch: int = 64) -> float:
    """Average mean per-vertex distance over pairs of random generations."""
    if n_samples < 2:
        raise MetricError("diversity needs at least 2 samples")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_samples, model.latent_size))
    shapes = generate_batched(model, z, batch)
    if n_samples <= 128:
        pairs = [(i, j) for i in range(n_samples) for j in range(i + 1, n_samples)]
    else:
        pairs = list(zip(rng.integers(0, n_samples, max_pairs),
                         rng.integers(0, n_samples, max_pairs)))
        pairs = [(i, j) for i, j in pairs if i != j]
    dists = [float(np.linalg.norm(shapes[i] - shapes[j], axis=1).mean()) for i, j in pairs]
    return float(np.mean(dists))


def generate_batched(model, z: np.ndarray, batch: int = 64) -> np.ndarray:
    outs = [model.generate(z[s : s + batch]) for s in range(0, len(z), batch)]
    return np.concatenate(outs, axis=0)


def chamfer_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Squared symmetric Chamfer distance between two point sets."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) == 0 or len(b) == 0:
        raise MetricError("empty point set")
    d2 = cdist(a, b, "sqeuclidean")
    return float(d2.min(axis=1).mean() + d2.min(axis=0).mean())


def _chamfer_matrix(a_sets: np.ndarray, b_sets: np.ndarray) -> np.ndarray:
    out = np.empty((len(a_sets), len(b_sets)))
    for i, a in enumerate(a_sets):
        for j, b in enumerate(b_sets):
            out[i, j] = chamfer_distance(a, b)
    return out


def jsd(generated: np.ndarray, reference: np.ndarray, resolution: int = 28) -> float:
    """Jensen-Shannon divergence (log base 2) of voxelized vertex clouds."""
    if len(generated) == 0 or len(reference) == 0:
        raise MetricError("empty set")
    gen_pts = np.concatenate([np.asarray(m) for m in generated])
    ref_pts = np.concatenate([np.asarray(m) for m in reference])
    both = np.concatenate([gen_pts, ref_pts])
    lo, hi = both.min(axis=0), both.max(axis=0)
    hi = np.where(hi > lo, hi, lo + 1.0)  # degenerate axis fallback
    edges = [np.linspace(lo[k], hi[k], resolution + 1) for k in range(3)]
    p, _ = np.histogramdd(gen_pts, bins=edges)
    q, _ = np.histogramdd(ref_pts, bins=edges)
    p = (p / p.sum()).ravel()
    q = (q / q.sum()).ravel()
    m = 0.5 * (p + q)

    def kl(x, y):
        mask = x > 0
        return float(np.sum(x[mask] * np.log2(x[mask] / y[mask])))

    return 0.5 * kl(p, m) + 0.5 * kl(q, m)


def mmd(generated: np.ndarray, reference: np.ndarray) -> float:
    """Mean over the reference set of the min Chamfer distance to a generation."""
    d = _chamfer_matrix(reference, generated)
    return float(d.min(axis=1).mean())


def cov(generated: np.ndarray, reference: np.ndarray) -> float:
    """Percent of reference meshes that are some generation's nearest neighbor."""
    d = _chamfer_matrix(reference, generated)
    matched = np.unique(d.argmin(axis=0))
    return 100.0 * len(matched) / len(reference)


def one_nna(generated: np.ndarray, reference: np.ndarray) -> float:
    """|leave-one-out 1-NN accuracy - 50| on the pooled labeled sets.

    Ties at exactly zero distance resolve toward the opposite class (a
    duplicated set is maximally distinguishable by its zero-distance twin);
    other ties take the lowest index.
    """
    if len(generated) == 0 or len(reference) == 0:
        raise MetricError("empty set")
    pool = np.concatenate([generated, reference])
    labels = np.array([0] * len(generated) + [1] * len(reference))
    n = len(pool)
    d = _chamfer_matrix(pool, pool)
    np.fill_diagonal(d, np.inf)
    correct = 0
    for i in range(n):
        row = d[i]
        best = row.min()
        candidates = np.flatnonzero(row == best)
        if best == 0.0:
            opposite = candidates[labels[candidates] != labels[i]]
            pick = opposite[0] if len(opposite) else candidates[0]
        else:
            pick = candidates[0]
        correct += labels[pick] == labels[i]
    accuracy = 100.0 * correct / n
    return abs(accuracy - 50.0)


@dataclass(frozen=True)
class VpConfig:
    """Variation-predictability settings (paper-scale defaults)."""

    pairs: int = 10000            # N_VP
    train_fraction: float = 0.1   # eta_VP
    splits: int = 3               # S_VP
    classifier_epochs: int = 5
    classifier_lr: float = 1e-4
    batch_size: int = 16
    seed: int = 0
    perturbation: str = "resample"  # or "offset"
    offset_magnitude: float = 0.1
    generation_batch: int = 128


def vp_score(model, config: VpConfig = VpConfig(), operators=None) -> float:
    """Mean few-shot test accuracy (x100) predicting the perturbed latent dim.

    The classifier mirrors the encoder trunk with a single classification
    head and trains on standardized vertex differences of generation pairs.
    ``operators`` overrides the topology operators the classifier is built
    on (needed for oracle generators that carry none).
    """
    rng = np.random.default_rng(config.seed)
    latent = model.latent_size
    operators = operators if operators is not None else model.operators
    generate_std = getattr(model, "generate_standardized", model.generate)
    n_train = int(round(config.pairs * config.train_fraction))
    if n_train < 1 or config.pairs - n_train < 1:
        raise MetricError("too few pairs for the requested train fraction")
    z1 = rng.standard_normal((config.pairs, latent))
    dims = rng.integers(0, latent, config.pairs)
    z2 = z1.copy()
    if config.perturbation == "resample":
        z2[np.arange(config.pairs), dims] = rng.standard_normal(config.pairs)
    elif config.perturbation == "offset":
        signs = rng.choice([-1.0, 1.0], config.pairs)
        z2[np.arange(config.pairs), dims] += signs * config.offset_magnitude
    else:
        raise MetricError(f"unknown perturbation mode {config.perturbation!r}")

    bs = config.generation_batch
    diffs = np.concatenate(
        [
            generate_std(z1[s : s + bs]) - generate_std(z2[s : s + bs])
            for s in range(0, config.pairs, bs)
        ]
    )  # (pairs, N, 3)
    # one global RMS normalization conditions classifier inputs without
    # rescaling individual pairs: weak (underused) latent dims must stay
    # weak relative to strong ones for the score to reflect dim usage
    rms = np.sqrt((diffs**2).mean())
    if rms > 1e-12:
        diffs = diffs / rms

    n = diffs.shape[1]
    accuracies = []
    for split in range(config.splits):
        split_rng = np.random.default_rng(config.seed + 1000 + split)
        order = split_rng.permutation(config.pairs)
        train_idx, test_idx = order[:n_train], order[n_train:]
        classifier = Discriminator(operators, latent, split_rng)
        opt = Adam(classifier.parameters(), lr=config.classifier_lr)
        for _ in range(config.classifier_epochs):
            epoch_order = split_rng.permutation(train_idx)
            for start in range(0, len(epoch_order), config.batch_size):
                idx = epoch_order[start : start + config.batch_size]
                b = len(idx)
                x = Tensor(diffs[idx].reshape(b * n, 3))
                onehot = np.zeros((b, latent))
                onehot[np.arange(b), dims[idx]] = 1.0
                with Tape():
                    logits = classifier(x, b)
                    log_probs = ad.log_softmax(logits)
                    ce = ad.mul_scalar(
                        ad.tensor_sum(ad.mul_const(log_probs, onehot)), -1.0 / b
                    )
                    backward(ce)
                opt.step()
        correct = 0
        for start in range(0, len(test_idx), 256):
            idx = test_idx[start : start + 256]
            b = len(idx)
            logits = classifier(Tensor(diffs[idx].reshape(b * n, 3)), b)
            correct += int(np.sum(logits.values.argmax(axis=1) == dims[idx]))
        accuracies.append(100.0 * correct / len(test_idx))
    return float(np.mean(accuracies))


def traversal_distance_profile(
    model,
    segmentation: AttributeSegmentation,
    traversal_range: tuple[float, float] = (-3.0, 3.0),
) -> np.ndarray:
    """(F, latent) matrix of per-attribute mean distances across traversals.

    Column j holds, per attribute, the mean per-vertex distance between the
    shapes generated with latent j at its minimum and at its maximum (all
    other latents zero).
    """
    latent = model.latent_size
    lo = np.zeros((latent, latent))
    hi = np.zeros((latent, latent))
    lo[np.arange(latent), np.arange(latent)] = traversal_range[0]
    hi[np.arange(latent), np.arange(latent)] = traversal_range[1]
    shapes_lo = generate_batched(model, lo)
    shapes_hi = generate_batched(model, hi)
    dist = np.linalg.norm(shapes_hi - shapes_lo, axis=2)  # (latent, N)
    profile = np.zeros((segmentation.attribute_count, latent))
    for w in range(segmentation.attribute_count):
        profile[w] = dist[:, segmentation.indices[w]].mean(axis=1)
    return profile


def traversal_locality(profile: np.ndarray, kappa: int, ratio: float = 3.0) -> float:
    """Fraction of latent dims whose owning attribute dominates by ``ratio``."""
    n_attr, latent = profile.shape
    wins = 0
    for j in range(latent):
        owner = j // kappa
        others = np.delete(profile[:, j], owner)
        if profile[owner, j] >= ratio * others.max():
            wins += 1
    return wins / latent


def evaluate_model(
    model,
    test_vertices: np.ndarray,
    segmentation: AttributeSegmentation,
    n_generated: int = 64,
    seed: int = 0,
    jsd_resolution: int = 28,
    vp_config: VpConfig | None = None,
) -> dict:
    """Full metrics report mirroring the comparison-table columns.

    JSD and MMD are reported raw; ``display`` carries the conventional x100
    scaled values used in summaries.
    """
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_generated, model.latent_size))
    generated = generate_batched(model, z)
    reference = np.asarray(test_vertices, dtype=np.float64)[: max(n_generated, 2)]
    report: dict = {
        "sample_count": int(n_generated),
        "reference_count": int(len(reference)),
        "seed": int(seed),
        "grid_resolution": int(jsd_resolution),
        "diversity": diversity(model, n_generated, seed + 1),
        "jsd": jsd(generated, reference, jsd_resolution),
        "mmd": mmd(generated, reference),
        "cov_percent": cov(generated, reference),
        "one_nna_delta_percent": one_nna(generated, reference),
    }
    if getattr(model, "encoder", None) is not None:
        report["mean_reconstruction"] = mean_reconstruction(model, reference)
    if vp_config is not None:
        report["vp_percent"] = vp_score(model, vp_config)
    profile = traversal_distance_profile(model, segmentation)
    report["traversal_profile"] = profile.tolist()
    report["traversal_locality"] = traversal_locality(profile, model.kappa)
    report["display"] = {
        "jsd_x100": report["jsd"] * 100.0,
        "mmd_x100": report["mmd"] * 100.0,
    }
    return report
