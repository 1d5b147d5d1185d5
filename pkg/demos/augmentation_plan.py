"""Class-balanced augmentation: plan arithmetic and transform sampling.

Retinopathy corpora are dominated by healthy eyes. The augmentation plan
holds out a fixed validation quota per grade, then gives each remaining
training image a per-grade number of extra augmented copies, chosen so
every grade lands near the same share of the training corpus.
"""

import numpy as np

from fundusdl.augment import (apply_augment, build_plan_from_counts,
                              identity_params, sample_params)
from fundusdl.rng import derive_rng
from fundusdl.synthetic import make_fundus

# A strongly imbalanced grade distribution at clinical scale.
raw_counts = {0: 25810, 1: 2443, 2: 5292, 3: 873, 4: 708}

plan = build_plan_from_counts(raw_counts, validation_per_class=200,
                              multipliers=(0, 11, 4, 27, 35))

print("grade  raw     held out  training  copies  total after augment")
for g in range(5):
    t = plan.train_counts[g]
    m = plan.multipliers[g]
    print(f"  {g}   {raw_counts[g]:6d}      200    {t:6d}    1+{m:<2d}"
          f"   {plan.expected_totals[g]:7d}")
total = sum(plan.expected_totals.values())
share = {g: plan.expected_totals[g] / total for g in range(5)}
print(f"grand total {total:,}; per-grade share "
      + ", ".join(f"{share[g]:.0%}" for g in range(5)))

# Each copy gets an independently drawn affine + color transform.
rng = derive_rng(7, "augment", "demo")
print("\nthree sampled parameter sets:")
for _ in range(3):
    p = sample_params(rng)
    print(f"  rot {p.rotation_deg:6.1f}  shear {p.shear_deg:5.1f}  "
          f"flip {str(p.flip_h):5s} zoom {p.zoom:.2f}  "
          f"crop {p.crop_fraction:.2f}  shift {p.translate_px[0]:+5.1f},"
          f"{p.translate_px[1]:+5.1f}")

# The identity parameter set reproduces the input exactly; validation
# images pass through it untouched.
img = make_fundus(128, grade=1, rng=derive_rng(0, "demo", 1))
out = apply_augment(img, identity_params())
print(f"\nidentity transform is exact: {bool(np.array_equal(img, out))}")

rotated = apply_augment(img, sample_params(rng))
print(f"a sampled transform changes {np.mean(rotated != img):.0%} "
      f"of the pixels")
