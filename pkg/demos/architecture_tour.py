"""Walk the layer stack of the grading network and the blending head.

The main network is a 512x512x3 convolutional regressor: alternating
4x4/3x3 convolutions and stride-2 max pools shrink the frame while the
channel count doubles, two 1024-unit dense layers follow, and a single
linear unit emits the severity score.
"""

import numpy as np

from fundusdl.model import build_blend_network, build_main_network

net = build_main_network(seed=0)

print("main network, input 3x512x512")
print(f"{'layer':28s}{'output shape':>20s}{'params':>12s}")
shape = (3, 512, 512)
total = 0
for layer in net.layers:
    shape = layer.out_shape(shape)
    n = sum(p.size for _, p in layer.params())
    total += n
    pretty = "x".join(str(s) for s in shape)
    print(f"{layer.name or type(layer).__name__:28s}{pretty:>20s}"
          f"{n or '':>12}")
print(f"{'total':28s}{'':>20s}{total:>12,}")
assert total == net.parameter_count() == 8_902_721

# The blending head consumes per-eye descriptor vectors (mean and std of
# the 1024-dim features over augmented passes, both eyes concatenated).
blend = build_blend_network(4096, seed=0)
print("\nblending network, input 4096")
widths = [4096]
for layer in blend.layers:
    n = sum(p.size for _, p in layer.params())
    out = layer.out_shape((widths[-1],))
    widths.append(out[0])
    print(f"{layer.name or type(layer).__name__:28s}{out[0]:>20}"
          f"{n or '':>12}")
print(f"width chain: {' -> '.join(str(w) for w in widths)}")

# A forward pass at batch 2 confirms the shapes are not just bookkeeping.
x = np.random.default_rng(0).standard_normal((2, 3, 512, 512),
                                             dtype=np.float32)
out = net.forward(x)
print(f"\nforward pass: input {x.shape} -> output {out.shape}")
