"""Training loops for the VAE and both GAN flavours, with checkpointing.

One run is fully determined by (config, dataset, basis): parameter init,
epoch shuffling, and reparameterization noise all come from a single seeded
generator whose state is checkpointed, so a resumed run reproduces an
uninterrupted one bit-for-bit.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor, backward
from .losses import (
    SpectralLossContext,
    clip_critic,
    kl_loss,
    laplacian_smoothing_loss,
    local_eigenprojection_loss_generated,
    local_eigenprojection_loss_input,
    lsgan_discriminator_loss,
    lsgan_generator_loss,
    reconstruction_loss,
    wgan_critic_loss,
    wgan_generator_loss,
)
from .mesh import DatasetStats, Mesh
from .networks import (
    ArchitectureConfig,
    Critic,
    Discriminator,
    Encoder,
    Generator,
    TopologyOperators,
    TrainedModel,
)
from .optim import make_optimizer
from .spectral import SpectralBasis

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"EMCKPT01"


class TrainingError(RuntimeError):
    pass


class _abort_on_nonfinite:
    """Convert autodiff non-finite errors into training aborts that name
    the last good checkpoint."""

    def __init__(self, epoch: int, last_good):
        self.epoch = epoch
        self.last_good = last_good

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None and issubclass(exc_type, ad.AutodiffError):
            hint = f"; last good checkpoint: {self.last_good}" if self.last_good else ""
            raise TrainingError(f"non-finite loss at epoch {self.epoch}{hint}") from exc
        return False


@dataclass(frozen=True)
class TrainConfig:
    """Everything a training run depends on besides the data itself."""

    model: str = "vae"                  # vae | lsgan | wgan
    epochs: int = 40
    batch_size: int = 16
    seed: int = 0
    # objective weights
    alpha: float = 1.0                  # smoothing
    beta: float = 1e-4                  # KL (VAE only)
    eta1: float = 0.0                   # eigenprojection loss on the encoder
    eta2: float = 0.0                   # eigenprojection loss on the generator
    eta: float = 0.0                    # eigenprojection loss on a GAN generator
    # optimizers
    generator_optimizer: str = "adam"
    generator_lr: float = 1e-4
    discriminator_optimizer: str = "sgd"
    discriminator_lr: float = 8e-4
    critic_optimizer: str = "rmsprop"
    critic_lr: float = 5e-5
    clip_value: float = 0.01
    critic_steps: int = 5               # critic updates per generator update
    # spectral configuration
    num_modes: int = 50
    kappa: int = 5
    selection: str = "max_variance"
    standardize_projections: bool = True
    standardize_data: bool = True
    # architecture
    conv_channels: tuple[int, ...] = (32, 32, 32, 64)
    generator_channels: tuple[int, ...] = (64, 32, 32, 32)
    sampling_factors: tuple[int, ...] = (4, 4, 4, 4)
    spiral_length: int = 9
    spiral_dilation: int = 1
    # bookkeeping
    validation_fraction: float = 0.05
    mode_collapse_threshold: float = 1e-3
    checkpoint_every: int = 1

    def __post_init__(self):
        if self.batch_size < 1:
            raise TrainingError("batch size must be >= 1")
        if self.epochs < 1:
            raise TrainingError("epochs must be >= 1")
        if self.model not in ("vae", "lsgan", "wgan"):
            raise TrainingError(f"unknown model kind {self.model!r}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for key in ("conv_channels", "generator_channels", "sampling_factors"):
            d[key] = list(d[key])
        return d

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        d = dict(d)
        for key in ("conv_channels", "generator_channels", "sampling_factors"):
            if key in d:
                d[key] = tuple(d[key])
        known = {f.name for f in dataclasses.fields(TrainConfig)}
        unknown = set(d) - known
        if unknown:
            raise TrainingError(f"unknown config keys: {sorted(unknown)}")
        return TrainConfig(**d)

    def architecture(self, latent_size: int) -> ArchitectureConfig:
        return ArchitectureConfig(
            latent_size=latent_size,
            conv_channels=self.conv_channels,
            generator_channels=self.generator_channels,
            sampling_factors=self.sampling_factors,
            spiral_length=self.spiral_length,
            spiral_dilation=self.spiral_dilation,
        )


def _preset(defaults: dict, overrides: dict) -> TrainConfig:
    merged = dict(defaults)
    merged.update(overrides)
    return TrainConfig(**merged)


def vanilla_vae_config(**overrides) -> TrainConfig:
    return _preset(dict(model="vae", alpha=1.0, beta=1e-4), overrides)


def led_vae_config(**overrides) -> TrainConfig:
    return _preset(dict(model="vae", alpha=50.0, beta=1e-4, eta1=1.0, eta2=0.5), overrides)


def vanilla_lsgan_config(**overrides) -> TrainConfig:
    return _preset(dict(model="lsgan", alpha=10.0), overrides)


def led_lsgan_config(**overrides) -> TrainConfig:
    return _preset(dict(model="lsgan", alpha=50.0, eta=0.5), overrides)


def vanilla_wgan_config(**overrides) -> TrainConfig:
    return _preset(
        dict(model="wgan", alpha=10.0, generator_optimizer="rmsprop", generator_lr=1e-4),
        overrides,
    )


def led_wgan_config(**overrides) -> TrainConfig:
    return _preset(
        dict(model="wgan", alpha=50.0, eta=0.25, generator_optimizer="rmsprop",
             generator_lr=1e-4),
        overrides,
    )


def split_dataset(vertices: np.ndarray, validation_fraction: float, seed: int):
    """Seeded train/validation split over the leading axis."""
    n = len(vertices)
    n_val = int(round(n * validation_fraction))
    perm = np.random.default_rng(seed).permutation(n)
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    return vertices[train_idx], vertices[val_idx]


def unstandardized_projection_view(basis: SpectralBasis) -> SpectralBasis:
    """Ablation view with m* = 0 and s* = 1 in the projection loss."""
    return replace(
        basis,
        mean=tuple(np.zeros_like(m) for m in basis.mean),
        std=tuple(np.ones_like(s) for s in basis.std),
    )


@dataclass
class TrainResult:
    model: TrainedModel
    curves: list[dict]
    config: TrainConfig
    networks: dict = field(default_factory=dict)
    checkpoint_path: Path | None = None
    initialization_seconds: float = 0.0
    training_seconds: float = 0.0


class _Run:
    """Shared setup for the three training loops."""

    def __init__(self, config: TrainConfig, train_vertices: np.ndarray,
                 basis: SpectralBasis, topology, val_vertices: np.ndarray | None):
        t0 = time.perf_counter()
        self.config = config
        self.basis = basis
        self.stats: DatasetStats = basis.stats
        self.topology = topology
        self.latent = basis.latent_size
        self.n = self.stats.mean.shape[0]
        self.train_raw = np.asarray(train_vertices, dtype=np.float64)
        self.val_raw = None if val_vertices is None or not len(val_vertices) else np.asarray(
            val_vertices, dtype=np.float64
        )
        self.loss_basis = (
            basis if config.standardize_projections else unstandardized_projection_view(basis)
        )
        self.ctx = SpectralLossContext(self.loss_basis)
        template = Mesh(self.stats.mean, topology)
        self.ops = TopologyOperators(template, config.architecture(self.latent))
        self.rng = np.random.default_rng(config.seed)
        self.init_seconds = time.perf_counter() - t0

    def network_input(self, raw: np.ndarray) -> np.ndarray:
        if self.config.standardize_data:
            return (raw - self.stats.mean) / self.stats.std
        return raw

    def stacked(self, raw: np.ndarray) -> Tensor:
        b = raw.shape[0]
        return Tensor(self.network_input(raw).reshape(b * self.n, 3))

    def tutte(self, batch: int):
        return self.ctx.tutte_batched(self.topology, batch)

    def batches(self, order: np.ndarray):
        bs = self.config.batch_size
        for start in range(0, len(order), bs):
            yield order[start : start + bs]


def _curves_mean(rows: list[dict]) -> dict:
    keys = rows[0].keys()
    return {k: float(np.mean([r[k] for r in rows])) for k in keys}


def write_loss_curves(curves: list[dict], path: str | Path) -> None:
    """Long-format CSV: epoch, loss name, value."""
    lines = ["epoch,name,value"]
    for row in curves:
        epoch = row["epoch"]
        for name, value in row.items():
            if name != "epoch":
                lines.append(f"{epoch},{name},{value!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# --- checkpoints ---


def _blob_and_layout(arrays: list[tuple[str, np.ndarray]]):
    layout = []
    parts = []
    for name, arr in arrays:
        layout.append({"name": name, "shape": list(arr.shape)})
        parts.append(np.ascontiguousarray(arr, dtype="<f8").ravel())
    blob = np.concatenate(parts).tobytes() if parts else b""
    return blob, layout


def save_checkpoint(path: str | Path, *, config: TrainConfig, epoch: int, kind: str,
                    networks: dict, optimizers: dict, rng: np.random.Generator) -> None:
    arrays: list[tuple[str, np.ndarray]] = []
    for net_name, net in networks.items():
        for p in net.parameters():
            arrays.append((f"param/{net_name}/{p.name}", p.values))
    opt_states = {}
    for opt_name, opt in optimizers.items():
        state = opt.state_dict()
        buffers = {}
        for key, value in state.items():
            if isinstance(value, list) and value and isinstance(value[0], np.ndarray):
                for i, arr in enumerate(value):
                    arrays.append((f"opt/{opt_name}/{key}/{i}", arr))
                buffers[key] = {"count": len(value)}
            else:
                buffers[key] = value
        opt_states[opt_name] = buffers
    blob, layout = _blob_and_layout(arrays)
    header = {
        "version": 1,
        "kind": kind,
        "epoch": epoch,
        "config": config.to_dict(),
        "rng_state": json.loads(json.dumps(rng.bit_generator.state)),
        "layout": layout,
        "optimizers": opt_states,
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
    }
    header_bytes = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(np.uint64(len(header_bytes)).tobytes())
        fh.write(header_bytes)
        fh.write(blob)


def read_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Header dict plus name->array map from the blob."""
    raw = Path(path).read_bytes()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise TrainingError(f"{path}: not a checkpoint file")
    header_len = int(np.frombuffer(raw[8:16], dtype=np.uint64)[0])
    header = json.loads(raw[16 : 16 + header_len].decode("utf-8"))
    if header.get("version") != 1:
        raise TrainingError(f"unsupported checkpoint version {header.get('version')}")
    blob = raw[16 + header_len :]
    if hashlib.sha256(blob).hexdigest() != header["blob_sha256"]:
        raise TrainingError(f"{path}: checkpoint blob checksum failure")
    flat = np.frombuffer(blob, dtype="<f8")
    arrays = {}
    offset = 0
    for item in header["layout"]:
        size = int(np.prod(item["shape"])) if item["shape"] else 1
        arrays[item["name"]] = flat[offset : offset + size].reshape(item["shape"]).copy()
        offset += size
    return header, arrays


def _restore_run_state(header: dict, arrays: dict, networks: dict, optimizers: dict,
                       rng: np.random.Generator) -> int:
    for net_name, net in networks.items():
        for p in net.parameters():
            p.values[:] = arrays[f"param/{net_name}/{p.name}"]
    for opt_name, opt in optimizers.items():
        stored = dict(header["optimizers"][opt_name])
        for key, value in list(stored.items()):
            if isinstance(value, dict) and "count" in value:
                stored[key] = [
                    arrays[f"opt/{opt_name}/{key}/{i}"] for i in range(value["count"])
                ]
        opt.load_state_dict(stored)
    rng.bit_generator.state = header["rng_state"]
    return int(header["epoch"])


def load_trained_model(path: str | Path, basis: SpectralBasis, topology) -> TrainedModel:
    """Rebuild an inference model from a checkpoint + precompute bundle."""
    header, arrays = read_checkpoint(path)
    config = TrainConfig.from_dict(header["config"])
    run = _Run(config, np.empty((0, basis.stats.mean.shape[0], 3)), basis, topology, None)
    networks = _build_networks(config, run)
    for net_name, net in networks.items():
        for p in net.parameters():
            p.values[:] = arrays[f"param/{net_name}/{p.name}"]
    return _as_trained_model(header["kind"], run, networks, seed=config.seed)


def _build_networks(config: TrainConfig, run: _Run) -> dict:
    init_rng = np.random.default_rng(config.seed)
    networks: dict = {}
    if config.model == "vae":
        networks["encoder"] = Encoder(run.ops, run.latent, init_rng)
        networks["generator"] = Generator(run.ops, run.latent, init_rng)
    elif config.model == "lsgan":
        networks["generator"] = Generator(run.ops, run.latent, init_rng)
        networks["discriminator"] = Discriminator(run.ops, run.latent, init_rng)
    else:
        networks["generator"] = Generator(run.ops, run.latent, init_rng)
        networks["critic"] = Critic(run.ops, init_rng)
    return networks


def _as_trained_model(kind: str, run: _Run, networks: dict, seed: int) -> TrainedModel:
    return TrainedModel(
        kind=kind,
        operators=run.ops,
        generator=networks["generator"],
        encoder=networks.get("encoder"),
        discriminator=networks.get("discriminator") or networks.get("critic"),
        stats=run.stats,
        latent_size=run.latent,
        kappa=run.basis.kappa,
        attribute_count=run.basis.attribute_count,
        seed=seed,
    )


def _checkpoint_path(out_dir: Path, epoch: int) -> Path:
    return out_dir / f"checkpoint_epoch{epoch:04d}.ckpt"


def _maybe_checkpoint(run: _Run, out_dir, epoch, kind, networks, optimizers) -> Path | None:
    if out_dir is None:
        return None
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = _checkpoint_path(out_dir, epoch)
    if epoch % run.config.checkpoint_every == 0 or epoch == run.config.epochs:
        save_checkpoint(path, config=run.config, epoch=epoch, kind=kind,
                        networks=networks, optimizers=optimizers, rng=run.rng)
        return path
    return None


def _validation_reconstruction(run: _Run, encoder: Encoder, generator: Generator) -> float:
    if run.val_raw is None:
        return float("nan")
    total, count = 0.0, 0
    bs = max(run.config.batch_size, 16)
    for start in range(0, len(run.val_raw), bs):
        chunk = run.val_raw[start : start + bs]
        b = chunk.shape[0]
        x = run.stacked(chunk)
        mu, _ = encoder(x, b)
        x_prime = generator(mu, b)
        total += float(np.sum((x_prime.values - x.values) ** 2)) / run.n
        count += b
    return total / count


def train_vae(config: TrainConfig, train_vertices: np.ndarray, basis: SpectralBasis,
              topology, val_vertices: np.ndarray | None = None,
              out_dir: str | Path | None = None,
              resume_from: str | Path | None = None) -> TrainResult:
    """Eq.-style composite objective with per-network gradient routing.

    The encoder-side eigenprojection term backpropagates through the encoder
    only (it compares mu to constant input projections); the generator-side
    term reuses the same decoded batch but its backward pass stops at the
    sampled latent, so encoder parameters receive exactly zero from it.
    """
    run = _Run(config, train_vertices, basis, topology, val_vertices)
    networks = _build_networks(config, run)
    encoder: Encoder = networks["encoder"]
    generator: Generator = networks["generator"]
    params = encoder.parameters() + generator.parameters()
    opt = make_optimizer(config.generator_optimizer, params, config.generator_lr)
    optimizers = {"joint": opt}
    start_epoch = 0
    if resume_from is not None:
        header, arrays = read_checkpoint(resume_from)
        start_epoch = _restore_run_state(header, arrays, networks, optimizers, run.rng)
    curves: list[dict] = []
    last_good: Path | None = None
    t0 = time.perf_counter()
    for epoch in range(start_epoch + 1, config.epochs + 1):
        order = run.rng.permutation(len(run.train_raw))
        rows = []
        for batch_idx in run.batches(order):
            raw = run.train_raw[batch_idx]
            b = raw.shape[0]
            x = run.stacked(raw)
            with _abort_on_nonfinite(epoch, last_good), Tape():
                mu, log_sigma = encoder(x, b)
                sigma = ad.exp(log_sigma)
                eps = run.rng.standard_normal((b, run.latent))
                z = ad.add(mu, ad.mul(sigma, Tensor(eps)))
                x_prime = generator(z, b)
                l_r = reconstruction_loss(x, x_prime, run.n)
                l_l = laplacian_smoothing_loss(x_prime, run.tutte(b), run.n)
                l_kl = kl_loss(mu, sigma)
                loss_a = ad.add(l_r, ad.add(ad.mul_scalar(l_l, config.alpha),
                                            ad.mul_scalar(l_kl, config.beta)))
                le_enc_value = 0.0
                if config.eta1 > 0:
                    le_enc = local_eigenprojection_loss_input(raw, mu, run.loss_basis)
                    le_enc_value = le_enc.item()
                    loss_a = ad.add(loss_a, ad.mul_scalar(le_enc, config.eta1))
                backward(loss_a)
                le_gen_value = 0.0
                if config.eta2 > 0:
                    le_gen = local_eigenprojection_loss_generated(
                        x_prime, mu.detach(), run.ctx, b
                    )
                    le_gen_value = le_gen.item()
                    # generator-only routing: stop the adjoint at the latent
                    backward(ad.mul_scalar(le_gen, config.eta2), stop=(z,))
            total = loss_a.item() + config.eta2 * le_gen_value
            if not np.isfinite(total):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}"
                    + (f"; last good checkpoint: {last_good}" if last_good else "")
                )
            opt.step()
            rows.append(
                {
                    "reconstruction": l_r.item(),
                    "kl": l_kl.item(),
                    "smoothing": l_l.item(),
                    "le_encoder": le_enc_value,
                    "le_generator": le_gen_value,
                    "total": total,
                }
            )
        epoch_row = {"epoch": epoch, **_curves_mean(rows)}
        epoch_row["val_reconstruction"] = _validation_reconstruction(run, encoder, generator)
        curves.append(epoch_row)
        saved = _maybe_checkpoint(run, out_dir, epoch, "vae", networks, optimizers)
        last_good = saved or last_good
        log.info("vae epoch %d: %s", epoch, epoch_row)
    result = TrainResult(
        model=_as_trained_model("vae", run, networks, config.seed),
        curves=curves,
        config=config,
        networks=networks,
        checkpoint_path=last_good,
        initialization_seconds=run.init_seconds,
        training_seconds=time.perf_counter() - t0,
    )
    return result


def _generated_diversity(fake_std: np.ndarray, n: int) -> float:
    """Mean pairwise per-vertex distance within one generated batch."""
    b = fake_std.shape[0] // n
    shapes = fake_std.reshape(b, n, 3)
    if b < 2:
        return 0.0
    total, count = 0.0, 0
    for i in range(b):
        for j in range(i + 1, b):
            total += float(np.linalg.norm(shapes[i] - shapes[j], axis=1).mean())
            count += 1
    return total / count


def train_lsgan(config: TrainConfig, train_vertices: np.ndarray, basis: SpectralBasis,
                topology, val_vertices: np.ndarray | None = None,
                out_dir: str | Path | None = None,
                resume_from: str | Path | None = None) -> TrainResult:
    """Alternating 1:1 least-squares GAN steps (D via SGD, G via Adam)."""
    run = _Run(config, train_vertices, basis, topology, val_vertices)
    networks = _build_networks(config, run)
    generator: Generator = networks["generator"]
    disc: Discriminator = networks["discriminator"]
    opt_g = make_optimizer(config.generator_optimizer, generator.parameters(),
                           config.generator_lr)
    opt_d = make_optimizer(config.discriminator_optimizer, disc.parameters(),
                           config.discriminator_lr)
    optimizers = {"generator": opt_g, "discriminator": opt_d}
    start_epoch = 0
    if resume_from is not None:
        header, arrays = read_checkpoint(resume_from)
        start_epoch = _restore_run_state(header, arrays, networks, optimizers, run.rng)
    curves: list[dict] = []
    last_good: Path | None = None
    collapse_streak = 0
    t0 = time.perf_counter()
    for epoch in range(start_epoch + 1, config.epochs + 1):
        order = run.rng.permutation(len(run.train_raw))
        rows = []
        diversities = []
        for batch_idx in run.batches(order):
            raw = run.train_raw[batch_idx]
            b = raw.shape[0]
            x = run.stacked(raw)
            # discriminator step on a detached fake batch
            z_d = run.rng.standard_normal((b, run.latent))
            fake_values = generator(Tensor(z_d), b).values
            with _abort_on_nonfinite(epoch, last_good), Tape():
                l_d = lsgan_discriminator_loss(disc(x, b), disc(Tensor(fake_values), b))
                backward(l_d)
            opt_d.step()
            # generator step
            z_g = Tensor(run.rng.standard_normal((b, run.latent)))
            with _abort_on_nonfinite(epoch, last_good), Tape():
                x_prime = generator(z_g, b)
                l_g = lsgan_generator_loss(disc(x_prime, b))
                l_l = laplacian_smoothing_loss(x_prime, run.tutte(b), run.n)
                total_g = ad.add(l_g, ad.mul_scalar(l_l, config.alpha))
                le_value = 0.0
                if config.eta > 0:
                    le = local_eigenprojection_loss_generated(x_prime, z_g, run.ctx, b)
                    le_value = le.item()
                    total_g = ad.add(total_g, ad.mul_scalar(le, config.eta))
                backward(total_g)
            if not np.isfinite(total_g.item() + l_d.item()):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}"
                    + (f"; last good checkpoint: {last_good}" if last_good else "")
                )
            opt_g.step()
            opt_d.zero_grad()  # generator pass leaks grads into D
            diversities.append(_generated_diversity(x_prime.values, run.n))
            rows.append({"generator": l_g.item(), "discriminator": l_d.item(),
                         "smoothing": l_l.item(), "le_generator": le_value,
                         "generator_total": total_g.item()})
        epoch_row = {"epoch": epoch, **_curves_mean(rows)}
        epoch_row["generated_diversity"] = float(np.mean(diversities))
        if epoch_row["generated_diversity"] < config.mode_collapse_threshold:
            collapse_streak += 1
            if collapse_streak >= 5:
                log.warning("possible mode collapse: %d epochs of low diversity",
                            collapse_streak)
        else:
            collapse_streak = 0
        curves.append(epoch_row)
        saved = _maybe_checkpoint(run, out_dir, epoch, "lsgan", networks, optimizers)
        last_good = saved or last_good
        log.info("lsgan epoch %d: %s", epoch, epoch_row)
    return TrainResult(
        model=_as_trained_model("lsgan", run, networks, config.seed),
        curves=curves,
        config=config,
        networks=networks,
        checkpoint_path=last_good,
        initialization_seconds=run.init_seconds,
        training_seconds=time.perf_counter() - t0,
    )


def train_wgan(config: TrainConfig, train_vertices: np.ndarray, basis: SpectralBasis,
               topology, val_vertices: np.ndarray | None = None,
               out_dir: str | Path | None = None,
               resume_from: str | Path | None = None,
               clip_observer=None) -> TrainResult:
    """Wasserstein GAN: n critic steps per generator step, clipped critic."""
    run = _Run(config, train_vertices, basis, topology, val_vertices)
    networks = _build_networks(config, run)
    generator: Generator = networks["generator"]
    critic: Critic = networks["critic"]
    opt_g = make_optimizer(config.generator_optimizer, generator.parameters(),
                           config.generator_lr)
    opt_c = make_optimizer(config.critic_optimizer, critic.parameters(), config.critic_lr)
    optimizers = {"generator": opt_g, "critic": opt_c}
    start_epoch = 0
    if resume_from is not None:
        header, arrays = read_checkpoint(resume_from)
        start_epoch = _restore_run_state(header, arrays, networks, optimizers, run.rng)
    curves: list[dict] = []
    last_good: Path | None = None
    collapse_streak = 0
    t0 = time.perf_counter()
    for epoch in range(start_epoch + 1, config.epochs + 1):
        order = run.rng.permutation(len(run.train_raw))
        rows = []
        diversities = []
        for step, batch_idx in enumerate(run.batches(order)):
            raw = run.train_raw[batch_idx]
            b = raw.shape[0]
            x = run.stacked(raw)
            z_c = run.rng.standard_normal((b, run.latent))
            fake_values = generator(Tensor(z_c), b).values
            with _abort_on_nonfinite(epoch, last_good), Tape():
                l_c = wgan_critic_loss(critic(x, b), critic(Tensor(fake_values), b))
                backward(l_c)
            opt_c.step()
            clip_critic(critic.parameters(), config.clip_value)
            if clip_observer is not None:
                clip_observer(critic.parameters())
            row = {"critic": l_c.item(), "generator": 0.0, "le_generator": 0.0}
            if (step + 1) % config.critic_steps == 0:
                z_g = Tensor(run.rng.standard_normal((b, run.latent)))
                with _abort_on_nonfinite(epoch, last_good), Tape():
                    x_prime = generator(z_g, b)
                    l_g = wgan_generator_loss(critic(x_prime, b))
                    l_l = laplacian_smoothing_loss(x_prime, run.tutte(b), run.n)
                    total_g = ad.add(l_g, ad.mul_scalar(l_l, config.alpha))
                    if config.eta > 0:
                        le = local_eigenprojection_loss_generated(x_prime, z_g, run.ctx, b)
                        row["le_generator"] = le.item()
                        total_g = ad.add(total_g, ad.mul_scalar(le, config.eta))
                    backward(total_g)
                opt_g.step()
                opt_c.zero_grad()
                row["generator"] = l_g.item()
                diversities.append(_generated_diversity(x_prime.values, run.n))
                if not np.isfinite(total_g.item()):
                    raise TrainingError(f"non-finite generator loss at epoch {epoch}")
            if not np.isfinite(row["critic"]):
                raise TrainingError(f"non-finite critic loss at epoch {epoch}")
            rows.append(row)
        epoch_row = {"epoch": epoch, **_curves_mean(rows)}
        if diversities:
            epoch_row["generated_diversity"] = float(np.mean(diversities))
            if epoch_row["generated_diversity"] < config.mode_collapse_threshold:
                collapse_streak += 1
                if collapse_streak >= 5:
                    log.warning("possible mode collapse: %d epochs of low diversity",
                                collapse_streak)
            else:
                collapse_streak = 0
        curves.append(epoch_row)
        saved = _maybe_checkpoint(run, out_dir, epoch, "wgan", networks, optimizers)
        last_good = saved or last_good
        log.info("wgan epoch %d: %s", epoch, epoch_row)
    return TrainResult(
        model=_as_trained_model("wgan", run, networks, config.seed),
        curves=curves,
        config=config,
        networks=networks,
        checkpoint_path=last_good,
        initialization_seconds=run.init_seconds,
        training_seconds=time.perf_counter() - t0,
    )


def train(config: TrainConfig, train_vertices, basis, topology, **kwargs) -> TrainResult:
    loops = {"vae": train_vae, "lsgan": train_lsgan, "wgan": train_wgan}
    return loops[config.model](config, train_vertices, basis, topology, **kwargs)


def train_job(payload: dict) -> dict:
    """Self-contained training task for worker processes.

    ``payload`` carries file paths only (train/val .npy arrays, bundle
    directory with a template.ply, output directory) plus a config dict, so
    it pickles cheaply across process boundaries. Returns checkpoint path,
    loss curves, and timings.
    """
    from .bundle import load_bundle
    from .meshio import load_mesh

    config = TrainConfig.from_dict(payload["config"])
    train_vertices = np.load(payload["train_vertices"])
    val_vertices = (
        np.load(payload["val_vertices"]) if payload.get("val_vertices") else None
    )
    basis = load_bundle(payload["bundle"])
    topology = load_mesh(Path(payload["bundle"]) / "template.ply").topology
    result = train(
        config, train_vertices, basis, topology,
        val_vertices=val_vertices, out_dir=payload["out_dir"],
    )
    return {
        "checkpoint": str(result.checkpoint_path),
        "curves": result.curves,
        "initialization_seconds": result.initialization_seconds,
        "training_seconds": result.training_seconds,
    }
