"""Training objectives: reconstruction, KL, smoothing, eigenprojection, GAN.

All losses reduce with a mean over the batch. Network-side inputs arrive as
stacked standardized vertex tensors of shape (B*N, 3); the spectral loss
context pre-tiles the constants it needs per batch size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import SparseMatrix, Tensor
from .spectral import SpectralBasis, local_eigenproject, tutte_laplacian


class LossError(ValueError):
    pass


@dataclass(frozen=True)
class LossWeights:
    """Scalar weights of the composite objectives.

    alpha: smoothing, beta: KL, eta1/eta2: eigenprojection loss on the
    encoder/generator, eta: eigenprojection loss on a GAN generator.
    """

    alpha: float = 1.0
    beta: float = 1e-4
    eta1: float = 0.0
    eta2: float = 0.0
    eta: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "beta", "eta1", "eta2", "eta"):
            if getattr(self, name) < 0:
                raise LossError(f"{name} must be >= 0")


def reconstruction_loss(x: Tensor, x_prime: Tensor, vertex_count: int) -> Tensor:
    """Mean over the batch of (1/N) ||X' - X||_F^2 on stacked (B*N, 3) input."""
    if x.shape != x_prime.shape:
        raise LossError(f"shape mismatch {x.shape} vs {x_prime.shape}")
    batch = x.shape[0] // vertex_count
    diff = ad.sub(x_prime, x)
    return ad.mul_scalar(ad.tensor_sum(ad.square(diff)), 1.0 / (vertex_count * batch))


def kl_loss(mu: Tensor, sigma: Tensor) -> Tensor:
    """Mean over batch and latent dims of sigma^2 + mu^2 - log(sigma^2) - 1."""
    if mu.shape != sigma.shape:
        raise LossError(f"shape mismatch {mu.shape} vs {sigma.shape}")
    if np.any(sigma.values <= 0):
        raise LossError("sigma must be positive")
    term = ad.sub(
        ad.add(ad.square(sigma), ad.square(mu)),
        ad.add_scalar(ad.log(ad.square(sigma)), 1.0),
    )
    return ad.tensor_mean(term)


def laplacian_smoothing_loss(x_prime: Tensor, tutte_batched: SparseMatrix,
                             vertex_count: int) -> Tensor:
    """Mean over the batch of (1/N) ||T X'||_F^2."""
    if x_prime.shape[0] != tutte_batched.shape[1]:
        raise LossError(
            f"stacked vertices {x_prime.shape} do not match operator {tutte_batched.shape}"
        )
    batch = x_prime.shape[0] // vertex_count
    smoothed = ad.sparse_dense_matmul(tutte_batched, x_prime)
    return ad.mul_scalar(ad.tensor_sum(ad.square(smoothed)), 1.0 / (vertex_count * batch))


class SpectralLossContext:
    """Per-batch constants for the differentiable eigenprojection loss."""

    def __init__(self, basis: SpectralBasis):
        self.basis = basis
        self.vertex_count = basis.stats.mean.shape[0]
        self._tiled: dict[int, dict] = {}
        self._tutte: SparseMatrix | None = None

    def tutte_batched(self, topology, batch: int) -> SparseMatrix:
        if self._tutte is None:
            self._tutte = tutte_laplacian(topology)
        key = ("tutte", batch)
        cache = self._tiled.setdefault(key, {})
        if "op" not in cache:
            cache["op"] = SparseMatrix(sp.kron(sp.eye(batch), self._tutte, format="csr"))
        return cache["op"]

    def batch_constants(self, batch: int) -> dict:
        if batch not in self._tiled:
            stats = self.basis.stats
            n = self.vertex_count
            offsets = (np.arange(batch, dtype=np.int64) * n)[:, None]
            per_attr = []
            for w in range(self.basis.attribute_count):
                idx = self.basis.segmentation.indices[w]
                per_attr.append(
                    {
                        "flat": (idx[None, :] + offsets).reshape(-1),
                        "vectors": self.basis.vectors[w],
                        "mean": self.basis.mean[w],
                        "inv_std": 1.0 / self.basis.std[w],
                    }
                )
            self._tiled[batch] = {
                "sigma": np.tile(stats.std, (batch, 1)),
                "normals": np.tile(stats.normals, (batch, 1)),
                "attributes": per_attr,
            }
        return self._tiled[batch]

    def signed_distance(self, x_std: Tensor, batch: int) -> Tensor:
        """Differentiable signed distance from standardized stacked vertices."""
        consts = self.batch_constants(batch)
        delta = ad.mul_const(x_std, consts["sigma"])
        norms = ad.l2_norm_rows(delta)
        dots = np.einsum("ij,ij->i", delta.values, consts["normals"])
        gamma = np.where(dots >= 0, 1.0, -1.0)  # sign treated as constant
        return ad.mul_const(norms, gamma)

    def project(self, x_std: Tensor, batch: int) -> Tensor:
        """Standardized local eigenprojection of generated output, (B, F*kappa)."""
        consts = self.batch_constants(batch)
        sd = self.signed_distance(x_std, batch)
        blocks = []
        for attr in consts["attributes"]:
            rows = ad.gather_rows(sd, attr["flat"])
            per_mesh = ad.reshape(rows, (batch, len(attr["flat"]) // batch))
            proj = per_mesh @ Tensor(attr["vectors"])
            centered = ad.add_const(proj, -attr["mean"])
            blocks.append(ad.mul_const(centered, attr["inv_std"]))
        return ad.concat(blocks, axis=1)


def local_eigenprojection_loss_generated(
    x_prime_std: Tensor, z: Tensor, ctx: SpectralLossContext, batch: int
) -> Tensor:
    """Eigenprojection loss on generated output, differentiable in X' and z."""
    projections = ctx.project(x_prime_std, batch)
    if z.shape != projections.shape:
        raise LossError(f"latent shape {z.shape} vs projections {projections.shape}")
    return ad.tensor_mean(ad.tensor_abs(ad.sub(z, projections)))


def local_eigenprojection_loss_input(
    raw_vertices: np.ndarray, z: Tensor, basis: SpectralBasis
) -> Tensor:
    """Eigenprojection loss against (constant) input meshes, grads flow to z."""
    targets = local_eigenproject(raw_vertices, basis)
    targets = np.atleast_2d(targets)
    if z.shape != targets.shape:
        raise LossError(f"latent shape {z.shape} vs targets {targets.shape}")
    return ad.tensor_mean(ad.tensor_abs(ad.add_const(z, -targets)))


# --- GAN objectives ---


def _check_scores(*scores: Tensor):
    for s in scores:
        if s.values.size == 0:
            raise LossError("empty score batch")


def lsgan_generator_loss(d_fake: Tensor) -> Tensor:
    _check_scores(d_fake)
    return ad.mul_scalar(ad.tensor_mean(ad.square(ad.add_scalar(d_fake, -1.0))), 0.5)


def lsgan_discriminator_loss(d_real: Tensor, d_fake: Tensor) -> Tensor:
    _check_scores(d_real, d_fake)
    real_term = ad.tensor_mean(ad.square(ad.add_scalar(d_real, -1.0)))
    fake_term = ad.tensor_mean(ad.square(d_fake))
    return ad.mul_scalar(ad.add(real_term, fake_term), 0.5)


def wgan_generator_loss(c_fake: Tensor) -> Tensor:
    _check_scores(c_fake)
    return ad.neg(ad.tensor_mean(c_fake))


def wgan_critic_loss(c_real: Tensor, c_fake: Tensor) -> Tensor:
    _check_scores(c_real, c_fake)
    return ad.sub(ad.tensor_mean(c_fake), ad.tensor_mean(c_real))


def clip_critic(parameters, clip_value: float) -> None:
    """Clamp every critic parameter into [-c, c], in place."""
    if clip_value <= 0:
        raise LossError("clip value must be positive")
    for p in parameters:
        np.clip(p.values, -clip_value, clip_value, out=p.values)
