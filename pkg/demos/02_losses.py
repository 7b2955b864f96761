# %% [markdown]
# # The loss terms on small inputs
#
# Contextual similarity compares two *sets* of feature vectors, so it is
# indifferent to where things are in the image. Translating a texture barely
# changes it, whereas pixel MSE depends on exact alignment (the texture cells
# are 16 px apart, so a 16 px shift nearly lines up again).

# %%
import numpy as np
import torch

from internal_learning import imaging, synthetic
from internal_learning.features import extract_context_vectors, make_random_extractor
from internal_learning.losses import contextual_similarity, reconstruction_restoration, tv_norm

ext = make_random_extractor(seed=0)
img = synthetic.texture(64, 96)
base = imaging.to_tensor(img)
vec = lambda t: extract_context_vectors(ext, t).vectors

for shift in (0, 4, 8, 16):
    moved = torch.roll(base, shifts=shift, dims=-1)
    cx = contextual_similarity(vec(moved), vec(base)).item()
    mse = reconstruction_restoration(moved, base).item()
    print(f"shift {shift:2d}: CX {cx:.3f}  MSE {mse:.4f}")

# %% [markdown]
# Noise shows up directly in total variation, which is why the denoising
# objective carries a small TV weight.

# %%
for sigma in (0, 10, 25, 50):
    noisy = imaging.add_gaussian_noise(img, imaging.DegradationConfig(1, sigma, seed=0))
    print(f"sigma {sigma:2d}: TV {tv_norm(imaging.to_tensor(noisy)).item():9.1f}  "
          f"PSNR {imaging.psnr(noisy, img):6.2f}  SSIM {imaging.ssim(noisy, img):.3f}")

# %% [markdown]
# Gradients of every term are checked against float64 central differences.

# %%
from internal_learning.verification import run_gradchecks

for name, (rep, tol) in run_gradchecks("double", include_primitives=False).items():
    print(f"{name:28s} max rel err {rep.max_error:.1e}  (tol {tol:g})")
