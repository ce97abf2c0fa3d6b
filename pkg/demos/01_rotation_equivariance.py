"""Rotate the measurement, rotate the answer.

Builds an equivariant unrolled network with random weights and a plain-CNN
contrast, feeds both a small multi-coil problem and the
same problem turned by 90 degrees, and prints how far each output is from
the rotated original output.

    python demos/01_rotation_equivariance.py
"""

import numpy as np

from equicine.unroll import build_model, variant_config
from equicine.verify import pipeline_equivariance, random_problem

image, sens, mask = random_problem(seed=0)
print(f"problem: {image.shape[0]} frames of {image.shape[1]}x{image.shape[2]}, {sens.shape[0]} coils")

rng = np.random.default_rng(0)
for variant in ("dun-sre", "baseline"):
    model = build_model(variant_config(variant, K=3), seed=0)
    for p in model.params:
        p.data += 0.3 * rng.normal(size=p.shape)
    gap = pipeline_equivariance(model, image, sens, mask)
    print(f"{variant:>9}: {model.n_params:6d} parameters, worst relative gap over 3 rotations {gap:.2e}")

# the equivariant model commutes with rotation to round-off, the plain CNN does not
