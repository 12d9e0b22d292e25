"""Generative mesh models with spectrally structured latent spaces.

Fixed-topology triangle meshes are described per anatomical attribute by
projecting a signed-distance signal onto the highest-variance eigenvectors
of each attribute's graph Laplacian. Training VAEs and GANs to tie their
latent blocks to these projections yields latent spaces where each block
controls one attribute.
"""

__version__ = "0.1.0"
