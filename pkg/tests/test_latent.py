import numpy as np
import pytest

from eigenmesh.latent import (
    LatentError,
    ManipulationRequest,
    block_slice,
    direct_manipulation,
    interpolate,
    replace_attribute,
    sample_latents,
    traverse,
)
from eigenmesh.synthetic import OracleGenerator
from eigenmesh.training import led_vae_config, train_vae


def test_block_partition_arithmetic():
    # F=12, kappa=5: block w covers [5w, 5w+5)
    for w in range(12):
        blk = block_slice(w, 5)
        assert (blk.start, blk.stop) == (5 * w, 5 * w + 5)


def test_sample_latents_statistics():
    z = sample_latents(8, 10_000, truncation=1.0, seed=0)
    stds = z.std(axis=0)
    assert np.all((stds > 0.95) & (stds < 1.05))
    z8 = sample_latents(8, 10_000, truncation=0.8, seed=1)
    assert np.all(np.abs(z8.std(axis=0) - 0.8) < 0.05)


def test_sample_latents_deterministic_and_validated():
    a = sample_latents(4, 5, seed=3)
    b = sample_latents(4, 5, seed=3)
    assert np.array_equal(a, b)
    with pytest.raises(LatentError):
        sample_latents(4, 5, truncation=0.0)
    with pytest.raises(LatentError):
        sample_latents(4, 5, truncation=1.5)


def test_traverse_constant_values(small_dataset):
    oracle = OracleGenerator(small_dataset)
    z = np.zeros(oracle.latent_size)
    out = traverse(oracle, z, 0, [0.0, 0.0])
    assert np.array_equal(out["shapes"][0], out["shapes"][1])
    assert np.all(out["extreme_distances"] == 0.0)
    with pytest.raises(LatentError):
        traverse(oracle, z, oracle.latent_size, [0, 1])


def test_traverse_oracle_confined_to_attribute(small_dataset):
    oracle = OracleGenerator(small_dataset, strict=True)
    seg = small_dataset.segmentation
    out = traverse(oracle, np.zeros(oracle.latent_size), 0, [-3.0, 3.0])
    d = out["extreme_distances"]
    outside = np.concatenate(seg.indices[1:])
    assert np.all(d[outside] == 0.0)
    assert d[seg.indices[0]].max() > 0.0


def test_traverse_distances_match_loop(small_dataset):
    oracle = OracleGenerator(small_dataset)
    out = traverse(oracle, np.zeros(oracle.latent_size), 2, [-3.0, 3.0])
    a, b = out["shapes"][0], out["shapes"][-1]
    expect = np.array([np.linalg.norm(b[i] - a[i]) for i in range(len(a))])
    assert np.abs(out["extreme_distances"] - expect).max() < 1e-12


def test_interpolate_endpoints_and_smoothness(small_dataset):
    oracle = OracleGenerator(small_dataset)
    rng = np.random.default_rng(5)
    z_a = rng.standard_normal(oracle.latent_size)
    z_b = rng.standard_normal(oracle.latent_size)
    shapes = interpolate(oracle, z_a, z_b, steps=6)
    assert np.array_equal(shapes[0], oracle.generate(z_a))
    assert np.array_equal(shapes[-1], oracle.generate(z_b))
    const = interpolate(oracle, z_a, z_a, steps=4)
    assert all(np.array_equal(const[0], s) for s in const)
    total = np.linalg.norm(shapes[-1] - shapes[0], axis=1).max()
    per_step = max(
        np.linalg.norm(shapes[i + 1] - shapes[i], axis=1).max() for i in range(5)
    )
    assert per_step < total
    with pytest.raises(LatentError):
        interpolate(oracle, z_a, z_b, steps=1)


def test_replace_attribute_semantics():
    rng = np.random.default_rng(6)
    z_a = rng.standard_normal(12)
    z_b = rng.standard_normal(12)
    assert np.array_equal(replace_attribute(z_a, z_a, 1, 3), z_a)
    out = z_a
    for w in range(4):
        out = replace_attribute(out, z_b, w, 3)
    assert np.array_equal(out, z_b)
    with pytest.raises(LatentError):
        replace_attribute(z_a, z_b, 4, 3)


def test_manipulation_request_validation(small_dataset):
    seg = small_dataset.segmentation
    with pytest.raises(LatentError):
        ManipulationRequest(np.array([], dtype=int), np.zeros((0, 3)))
    with pytest.raises(LatentError):
        ManipulationRequest(np.array([1, 2]), np.zeros((3, 3)))
    req = ManipulationRequest(np.array([seg.indices[2][0], seg.indices[0][0]]),
                              np.zeros((2, 3)))
    assert req.affected_attributes(seg) == [0, 2]


@pytest.fixture(scope="module")
def tiny_trained(small_dataset, small_basis):
    cfg = led_vae_config(epochs=3, batch_size=16, seed=2, kappa=3, num_modes=20,
                         sampling_factors=(4, 2, 2, 2))
    res = train_vae(cfg, small_dataset.vertices[:96], small_basis,
                    small_dataset.template.topology)
    return res.model


def test_manipulation_zero_update_at_optimum(small_dataset, tiny_trained):
    model = tiny_trained
    seg = small_dataset.segmentation
    z0 = np.zeros(model.latent_size)
    shape = model.generate(z0)
    ids = seg.indices[1][:4]
    req = ManipulationRequest(ids, shape[ids])
    out = direct_manipulation(model, z0, req, seg, iterations=5)
    assert np.array_equal(out.latent, z0)
    assert out.residuals[0] == 0.0


def test_manipulation_masks_unselected_blocks(small_dataset, tiny_trained):
    model = tiny_trained
    seg = small_dataset.segmentation
    rng = np.random.default_rng(1)
    z0 = 0.3 * rng.standard_normal(model.latent_size)
    shape = model.generate(z0)
    ids = seg.indices[2][:5]
    req = ManipulationRequest(ids, shape[ids] + np.array([0.05, 0.0, 0.0]))
    out = direct_manipulation(model, z0, req, seg, iterations=10)
    blk = block_slice(2, model.kappa)
    untouched = np.ones(model.latent_size, dtype=bool)
    untouched[blk] = False
    assert np.array_equal(out.latent[untouched], z0[untouched])
    assert not np.array_equal(out.latent[blk], z0[blk])
    # residual decreases on a (briefly) trained model
    assert out.residuals[-1] < out.initial_residual
