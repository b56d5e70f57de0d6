"""Generates the 32x32 SSIM fixture pair and its reference value with scikit-image.

Run from this directory; commits ssim_a.png, ssim_b.png and ssim_reference.json.
"""
import json

import numpy as np
import skimage
from PIL import Image
from skimage.metrics import structural_similarity

rng = np.random.default_rng(20240611)
yy, xx = np.mgrid[0:32, 0:32] / 31.0
base = np.stack([0.5 + 0.4 * np.sin(6 * xx + 2 * yy), 0.5 + 0.3 * np.cos(5 * yy), 0.3 + 0.5 * xx * yy], axis=-1)
a = np.clip(base + 0.05 * rng.standard_normal(base.shape), 0, 1)
b = np.clip(0.9 * base + 0.05 + 0.08 * rng.standard_normal(base.shape), 0, 1)
a8 = np.round(a * 255).astype(np.uint8)
b8 = np.round(b * 255).astype(np.uint8)
Image.fromarray(a8, "RGB").save("ssim_a.png")
Image.fromarray(b8, "RGB").save("ssim_b.png")

af = np.asarray(Image.open("ssim_a.png"), dtype=np.float64) / 255.0
bf = np.asarray(Image.open("ssim_b.png"), dtype=np.float64) / 255.0
value = structural_similarity(af, bf, gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
                              data_range=1.0, channel_axis=-1)
with open("ssim_reference.json", "w") as f:
    json.dump({"ssim": float(value), "implementation": f"scikit-image {skimage.__version__}",
               "options": "gaussian_weights=True, sigma=1.5, use_sample_covariance=False, data_range=1, channel_axis=-1"},
              f, indent=2)
    f.write("\n")
print(repr(value))
