"""Latent-space tools: sampling, traversal, interpolation, manipulation.

Latents are partitioned into contiguous per-attribute blocks of length
kappa; attribute w owns indices [w*kappa, (w+1)*kappa). Direct manipulation
optimizes only the blocks of attributes containing selected vertices, one
attribute at a time in ascending order, so untouched blocks stay
bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor, backward
from .mesh import AttributeSegmentation
from .optim import Adam


class LatentError(ValueError):
    pass


def block_slice(attribute: int, kappa: int) -> slice:
    return slice(attribute * kappa, (attribute + 1) * kappa)


def sample_latents(latent_size: int, n: int, truncation: float = 1.0,
                   seed: int = 0) -> np.ndarray:
    """n i.i.d. draws from N(0, truncation^2 I); truncation in (0, 1]."""
    if not 0.0 < truncation <= 1.0:
        raise LatentError(f"truncation must be in (0, 1], got {truncation}")
    rng = np.random.default_rng(seed)
    return truncation * rng.standard_normal((n, latent_size))


def traverse(model, z: np.ndarray, dim: int, values) -> dict:
    """Shapes along one latent dimension plus the extremes' distance field."""
    z = np.asarray(z, dtype=np.float64)
    if not 0 <= dim < model.latent_size:
        raise LatentError(f"latent dim {dim} out of range")
    values = list(values)
    batch = np.tile(z, (len(values), 1))
    batch[:, dim] = values
    shapes = model.generate(batch)
    distances = np.linalg.norm(shapes[-1] - shapes[0], axis=1)
    return {"values": values, "shapes": shapes, "extreme_distances": distances}


def interpolate(model, z_a: np.ndarray, z_b: np.ndarray, steps: int) -> np.ndarray:
    """Shapes along the latent segment; endpoints equal direct generation."""
    if steps < 2:
        raise LatentError("steps must be >= 2")
    z_a = np.asarray(z_a, dtype=np.float64)
    z_b = np.asarray(z_b, dtype=np.float64)
    t = np.linspace(0.0, 1.0, steps)[:, None]
    # z_a + t*(z_b - z_a) stays exactly constant when both ends coincide
    zs = z_a[None] + t * (z_b - z_a)[None]
    zs[0] = z_a
    zs[-1] = z_b
    # one generation per step: endpoints then match direct single-latent
    # calls bit-for-bit (batched GEMM rows may differ by ulps)
    return np.stack([model.generate(z) for z in zs])


def replace_attribute(z_a: np.ndarray, z_b: np.ndarray, attribute: int,
                      kappa: int) -> np.ndarray:
    """Copy of z_a with attribute's block overwritten from z_b."""
    z_a = np.asarray(z_a, dtype=np.float64)
    z_b = np.asarray(z_b, dtype=np.float64)
    if z_a.shape != z_b.shape:
        raise LatentError("latent shape mismatch")
    blk = block_slice(attribute, kappa)
    if blk.stop > z_a.shape[-1]:
        raise LatentError(f"invalid attribute {attribute}")
    out = z_a.copy()
    out[..., blk] = z_b[..., blk]
    return out


@dataclass(frozen=True)
class ManipulationRequest:
    """Selected vertices and where the user wants them."""

    vertex_ids: np.ndarray
    targets: np.ndarray  # (len(vertex_ids), 3), model units

    def __post_init__(self):
        ids = np.asarray(self.vertex_ids, dtype=np.int64)
        targets = np.asarray(self.targets, dtype=np.float64)
        if ids.ndim != 1 or len(ids) == 0:
            raise LatentError("selection must contain at least one vertex")
        if targets.shape != (len(ids), 3):
            raise LatentError("targets must be (selection, 3)")
        object.__setattr__(self, "vertex_ids", ids)
        object.__setattr__(self, "targets", targets)

    def affected_attributes(self, segmentation: AttributeSegmentation) -> list[int]:
        return sorted(set(segmentation.labels[self.vertex_ids].tolist()))


@dataclass
class ManipulationResult:
    latent: np.ndarray
    residuals: list[float] = field(default_factory=list)
    initial_residual: float = 0.0


def direct_manipulation(
    model,
    z0: np.ndarray,
    request: ManipulationRequest,
    segmentation: AttributeSegmentation,
    iterations: int = 50,
    lr: float = 0.1,
) -> ManipulationResult:
    """Pull selected vertices toward targets by optimizing their latent blocks.

    Minimizes ||S(G(z)) - Y||_2^2 with Adam (fixed lr) over one attribute
    block at a time, attributes ascending; each pass runs ``iterations``
    steps with a fresh optimizer. Unselected blocks are never written.
    """
    z0 = np.asarray(z0, dtype=np.float64).reshape(-1)
    if z0.shape[0] != model.latent_size:
        raise LatentError("latent size mismatch")
    kappa = model.kappa
    attributes = request.affected_attributes(segmentation)
    stats = model.stats
    n = stats.mean.shape[0]
    sigma = stats.std.reshape(n, 3)
    mean = stats.mean.reshape(n, 3)
    current = z0.copy()

    def residual_of(z: np.ndarray) -> float:
        shape = model.generate(z)
        return float(np.sum((shape[request.vertex_ids] - request.targets) ** 2))

    result = ManipulationResult(latent=current, initial_residual=residual_of(current))
    for attribute in attributes:
        blk = block_slice(attribute, kappa)
        left = Tensor(current[None, : blk.start])
        right = Tensor(current[None, blk.stop :])
        block = Tensor(current[None, blk].copy(), requires_grad=True, name=f"z_block{attribute}")
        opt = Adam([block], lr=lr)
        for _ in range(iterations):
            with Tape():
                parts = [t for t in (left, block, right) if t.values.size]
                z = ad.concat(parts, axis=1)
                std_shape = model.generator(z, 1)
                raw = ad.add_const(ad.mul_const(std_shape, sigma), mean)
                selected = ad.gather_rows(raw, request.vertex_ids)
                loss = ad.tensor_sum(ad.square(ad.add_const(selected, -request.targets)))
                backward(loss)
            result.residuals.append(loss.item())
            opt.step()
        current = current.copy()
        current[blk] = block.values[0]
    result.latent = current
    result.residuals.append(residual_of(current))
    return result
