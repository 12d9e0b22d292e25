"""Encoder/generator/discriminator/critic built from spiral convolutions.

All networks share one stack of precomputed topology operators (spiral
indices per resolution, pooling/unpooling matrices from quadric sampling).
Batches are processed as stacked-vertex matrices of shape (B*N, C); the
operator cache pre-offsets spiral indices and block-diagonalizes the
sampling matrices per batch size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import SparseMatrix, Tensor
from .mesh import DatasetStats, Mesh
from .sampling import SamplingLevel, build_sampling_hierarchy
from .spirals import SpiralIndex, compute_spirals


@dataclass(frozen=True)
class ArchitectureConfig:
    latent_size: int
    conv_channels: tuple[int, ...] = (32, 32, 32, 64)
    sampling_factors: tuple[int, ...] = (4, 4, 4, 4)
    generator_channels: tuple[int, ...] = (64, 32, 32, 32)
    spiral_length: int = 9
    spiral_dilation: int = 1
    in_channels: int = 3

    def __post_init__(self):
        if len(self.conv_channels) != len(self.sampling_factors):
            raise ValueError("one sampling factor per encoder conv block")
        if len(self.generator_channels) != len(self.conv_channels):
            raise ValueError("generator/encoder block count mismatch")


class TopologyOperators:
    """Spirals and sampling operators for every resolution level."""

    def __init__(self, template: Mesh, config: ArchitectureConfig):
        self.config = config
        self.levels: list[SamplingLevel] = build_sampling_hierarchy(
            template, config.sampling_factors
        )
        topologies = [template.topology] + [lv.coarse_topology for lv in self.levels]
        self.topologies = topologies
        self.resolutions = [t.vertex_count for t in topologies]
        self.spirals: list[SpiralIndex] = [
            compute_spirals(t, config.spiral_length, config.spiral_dilation)
            for t in topologies[:-1]
        ]
        self._gather_cache: dict = {}
        self._pool_cache: dict = {}
        self._unpool_cache: dict = {}

    @property
    def bottleneck_size(self) -> int:
        return self.resolutions[-1]

    def gather(self, level: int, batch: int) -> tuple[np.ndarray, SparseMatrix]:
        key = (level, batch)
        if key not in self._gather_cache:
            base = self.spirals[level].indices
            n = self.resolutions[level]
            offsets = (np.arange(batch, dtype=np.int64) * n)[:, None, None]
            flat = (base[None, :, :] + offsets).reshape(-1)
            onehot = sp.csr_matrix(
                (np.ones(flat.size), (np.arange(flat.size), flat)),
                shape=(flat.size, batch * n),
            )
            self._gather_cache[key] = (flat, SparseMatrix(onehot.T.tocsr()))
        return self._gather_cache[key]

    def pool(self, level: int, batch: int) -> SparseMatrix:
        key = (level, batch)
        if key not in self._pool_cache:
            block = sp.kron(sp.eye(batch), self.levels[level].pool, format="csr")
            self._pool_cache[key] = SparseMatrix(block)
        return self._pool_cache[key]

    def unpool(self, level: int, batch: int) -> SparseMatrix:
        key = (level, batch)
        if key not in self._unpool_cache:
            block = sp.kron(sp.eye(batch), self.levels[level].unpool, format="csr")
            self._unpool_cache[key] = SparseMatrix(block)
        return self._unpool_cache[key]


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class SpiralConv:
    """Shared affine map over gathered spiral neighborhoods."""

    def __init__(self, name: str, in_channels: int, out_channels: int, length: int,
                 rng: np.random.Generator):
        self.name = name
        self.length = length
        self.in_channels = in_channels
        self.weight = Tensor(_glorot(rng, length * in_channels, out_channels),
                             requires_grad=True, name=f"{name}.weight")
        self.bias = Tensor(np.zeros(out_channels), requires_grad=True, name=f"{name}.bias")

    def __call__(self, x: Tensor, gather: tuple[np.ndarray, SparseMatrix]) -> Tensor:
        flat, scatter = gather
        g = ad.gather_rows(x, flat, scatter=scatter)
        g = ad.reshape(g, (x.shape[0], self.length * self.in_channels))
        return ad.add_bias(g @ self.weight, self.bias)

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]


class Linear:
    def __init__(self, name: str, in_features: int, out_features: int, rng: np.random.Generator):
        self.name = name
        self.weight = Tensor(_glorot(rng, in_features, out_features),
                             requires_grad=True, name=f"{name}.weight")
        self.bias = Tensor(np.zeros(out_features), requires_grad=True, name=f"{name}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        return ad.add_bias(x @ self.weight, self.bias)

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]


class _ConvTrunk:
    """Shared encoder-style trunk: (conv, elu, pool) per level."""

    def __init__(self, name: str, ops: TopologyOperators, rng: np.random.Generator):
        cfg = ops.config
        self.ops = ops
        self.convs = []
        channels = cfg.in_channels
        for i, out_ch in enumerate(cfg.conv_channels):
            self.convs.append(SpiralConv(f"{name}.conv{i}", channels, out_ch,
                                         cfg.spiral_length, rng))
            channels = out_ch
        self.out_features = ops.bottleneck_size * channels

    def __call__(self, x: Tensor, batch: int) -> Tensor:
        for i, conv in enumerate(self.convs):
            x = ad.elu(conv(x, self.ops.gather(i, batch)))
            x = ad.sparse_dense_matmul(self.ops.pool(i, batch), x)
        return ad.reshape(x, (batch, self.out_features))

    def parameters(self) -> list[Tensor]:
        return [p for conv in self.convs for p in conv.parameters()]


class Encoder:
    """Conv trunk with mean and log-std heads."""

    def __init__(self, ops: TopologyOperators, latent_size: int, rng: np.random.Generator):
        self.trunk = _ConvTrunk("enc", ops, rng)
        self.mu_head = Linear("enc.mu", self.trunk.out_features, latent_size, rng)
        self.log_sigma_head = Linear("enc.log_sigma", self.trunk.out_features, latent_size, rng)

    def __call__(self, x: Tensor, batch: int) -> tuple[Tensor, Tensor]:
        h = self.trunk(x, batch)
        return self.mu_head(h), self.log_sigma_head(h)

    def parameters(self) -> list[Tensor]:
        return self.trunk.parameters() + self.mu_head.parameters() + self.log_sigma_head.parameters()


class Generator:
    """Latent to stacked standardized vertices (B*N, 3)."""

    def __init__(self, ops: TopologyOperators, latent_size: int, rng: np.random.Generator):
        cfg = ops.config
        self.ops = ops
        g_ch = cfg.generator_channels
        self.head = Linear("gen.head", latent_size, ops.bottleneck_size * g_ch[0], rng)
        self.head_channels = g_ch[0]
        self.convs = []
        channels = g_ch[0]
        for i, out_ch in enumerate(g_ch):
            self.convs.append(SpiralConv(f"gen.conv{i}", channels, out_ch,
                                         cfg.spiral_length, rng))
            channels = out_ch
        self.out_conv = SpiralConv("gen.out", channels, cfg.in_channels, cfg.spiral_length, rng)

    def __call__(self, z: Tensor, batch: int) -> Tensor:
        n_levels = len(self.convs)
        x = self.head(z)
        x = ad.reshape(x, (batch * self.ops.bottleneck_size, self.head_channels))
        for i, conv in enumerate(self.convs):
            level = n_levels - 1 - i  # walk back up the hierarchy
            x = ad.sparse_dense_matmul(self.ops.unpool(level, batch), x)
            x = ad.elu(conv(x, self.ops.gather(level, batch)))
        return self.out_conv(x, self.ops.gather(0, batch))

    def parameters(self) -> list[Tensor]:
        params = self.head.parameters()
        for conv in self.convs:
            params += conv.parameters()
        return params + self.out_conv.parameters()


class Discriminator:
    """Conv trunk with a single wide score head (one score vector per mesh)."""

    def __init__(self, ops: TopologyOperators, head_size: int, rng: np.random.Generator):
        self.trunk = _ConvTrunk("disc", ops, rng)
        self.head = Linear("disc.head", self.trunk.out_features, head_size, rng)

    def __call__(self, x: Tensor, batch: int) -> Tensor:
        return self.head(self.trunk(x, batch))

    def parameters(self) -> list[Tensor]:
        return self.trunk.parameters() + self.head.parameters()


class Critic(Discriminator):
    """Discriminator variant scoring realism with a single output."""

    def __init__(self, ops: TopologyOperators, rng: np.random.Generator):
        super().__init__(ops, 1, rng)


def reparameterize(mu: Tensor, log_sigma: Tensor, epsilon: np.ndarray) -> Tensor:
    """z = mu + sigma * eps with sigma = exp(log_sigma)."""
    return ad.add(mu, ad.mul(ad.exp(log_sigma), Tensor(epsilon)))


@dataclass
class TrainedModel:
    """Inference-side view of a trained model (no tapes, numpy in/out)."""

    kind: str
    operators: TopologyOperators
    generator: Generator
    encoder: Encoder | None
    discriminator: Discriminator | None
    stats: DatasetStats
    latent_size: int
    kappa: int
    attribute_count: int
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def generate_standardized(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        batch = z.shape[0]
        out = self.generator(Tensor(z), batch)
        n = self.operators.resolutions[0]
        return out.values.reshape(batch, n, 3)

    def generate(self, z: np.ndarray) -> np.ndarray:
        """Latents to raw model-unit vertices; (latent,) -> (N, 3)."""
        single = np.asarray(z).ndim == 1
        std = self.generate_standardized(z)
        raw = std * self.stats.std + self.stats.mean
        return raw[0] if single else raw

    def encode(self, vertices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Raw vertices to (mu, sigma); accepts (N, 3) or (B, N, 3)."""
        if self.encoder is None:
            raise ValueError(f"{self.kind} model has no encoder")
        vertices = np.asarray(vertices, dtype=np.float64)
        single = vertices.ndim == 2
        batch_v = vertices[None] if single else vertices
        std = (batch_v - self.stats.mean) / self.stats.std
        b = std.shape[0]
        mu, log_sigma = self.encoder(Tensor(std.reshape(b * std.shape[1], 3)), b)
        sigma = np.exp(log_sigma.values)
        if single:
            return mu.values[0], sigma[0]
        return mu.values, sigma

    def block(self, attribute: int) -> slice:
        return slice(attribute * self.kappa, (attribute + 1) * self.kappa)
