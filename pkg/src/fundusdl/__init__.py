"""fundusdl: a from-scratch numpy CNN engine and retinal-fundus pipeline
for diabetic retinopathy grading.

The package splits into the network engine (`fundusdl.engine`), image
preparation (`fundusdl.preprocess`, `fundusdl.augment`), model definition and
serialization (`fundusdl.model`, `fundusdl.checkpoint`), training
(`fundusdl.trainer`, `fundusdl.features`), evaluation (`fundusdl.metrics`),
dataset plumbing (`fundusdl.manifest`), and the staged pipeline driver
(`fundusdl.pipeline`, `fundusdl.cli`).
"""

__version__ = "0.1.0"
