"""
The convolutional autoencoder
=============================

Build the default network, trace its shapes, verify backpropagation against
finite differences on a toy-sized copy and run a few epochs of
reconstruction training.
"""

import numpy as np

from tsidec.datagen import gen_dataset
from tsidec.dcae import build_dcae, encoder_trace, pretrain, reconstruction_loss
from tsidec.nn import grad_check
from tsidec.windowing import stack_matrices, to_matrix

# %%
# Layer-by-layer spatial sizes of the encoder for a 32 x 32 input
for name, h, w in encoder_trace(32, 32):
    print(f"{name:9s} {h:3d} x {w:3d}")

model = build_dcae(32, 32, seed=0)
print("flatten", model.flatten_dim, "latent", model.latent_dim, "parameters", model.n_params)

# %%
# Gradient check.  The full model has eleven million parameters, so the check
# runs on a 10 x 10 network with a handful of filters.  Coordinates whose
# perturbation crosses a ReLU kink or flips a max-pool winner are skipped.
toy = build_dcae(10, 10, latent_dim=4, seed=1, filters=(2, 2, 2, 3), dense_widths=(6, 5))
rep = grad_check(toy, np.random.default_rng(0).random((2, 1, 10, 10)))
print(rep)
print("max relative error %.2e" % rep.max_error)

# %%
# Reconstruction pretraining on 40 synthetic curves
series, _ = gen_dataset(n_per_mode=10, seed=0)
x = stack_matrices([to_matrix(s) for s in series])
before = reconstruction_loss(model, x)
model, history = pretrain(model, x, epochs=12, lr=0.001, batch_size=32, seed=0)
print("loss before %.4f, per-epoch" % before, np.round(history, 4))
