"""Network builders, inference, feature extraction, model checkpoints."""

import warnings

import numpy as np

from .augment import (DEFAULT_RANGES, apply_augment, identity_params,
                      sample_params, standardize)
from .checkpoint import read_records, write_records
from .engine import (Conv2d, Dense, Dropout, Flatten, LeakyReLU, Maxout,
                     MaxPool2d, Network, ReLU)
from .errors import CheckpointError, ConfigurationError
from .netconfig import (NetworkConfig, config_digest, main_network_config,
                        reduced_network_config)
from .rng import derive_rng

__all__ = ["build_network", "build_main_network", "build_reduced_network",
           "build_blend_network", "predict", "extract_features",
           "save_model", "load_model", "load_blend_model", "blend_digest",
           "BLEND_INPUT_DIM"]

BLEND_INPUT_DIM = 4096


def _activation_layer(name: str, spec_value: str):
    if spec_value == "leaky_relu":
        return LeakyReLU(name=name)
    if spec_value == "relu":
        return ReLU(name=name)
    return None


def build_network(cfg: NetworkConfig, seed: int) -> Network:
    """Instantiate a Network from a declarative config.

    Orthogonal weight init per parameterized layer, from RNG streams
    derived as (seed, "init", layer name).
    """
    layers = []
    counters = {}
    shape = (3, cfg.input_size, cfg.input_size)

    def next_name(prefix):
        counters[prefix] = counters.get(prefix, 0) + 1
        return f"{prefix}{counters[prefix]}"

    for spec in cfg.layers:
        if spec.kind == "conv":
            name = next_name("conv")
            if len(shape) != 3:
                raise ConfigurationError(
                    f"{name}: conv needs a (c, h, w) input, got {shape}")
            new = Conv2d(shape[0], spec.get("filters"),
                         kernel=spec.get("kernel"), stride=spec.get("stride"),
                         padding=spec.get("padding"),
                         rng=derive_rng(seed, "init", name), name=name)
        elif spec.kind == "pool":
            new = MaxPool2d(window=spec.get("kernel"),
                            stride=spec.get("stride"), name=next_name("pool"))
        elif spec.kind == "flatten":
            new = Flatten(name=next_name("flatten"))
        elif spec.kind == "dense":
            name = next_name("fc")
            if len(shape) != 1:
                raise ConfigurationError(
                    f"{name}: dense needs flat input (add a flatten layer), "
                    f"got {shape}")
            new = Dense(shape[0], spec.get("units"),
                        rng=derive_rng(seed, "init", name), name=name)
        elif spec.kind == "dropout":
            new = Dropout(p=spec.get("rate"), name=next_name("drop"))
        elif spec.kind == "maxout":
            new = Maxout(group=spec.get("groups"), name=next_name("maxout"))
        else:
            raise ConfigurationError(f"unknown layer kind {spec.kind!r}")
        layers.append(new)
        shape = new.out_shape(shape)
        if spec.kind in ("conv", "dense"):
            act = _activation_layer(next_name("act"), spec.get("activation"))
            if act is not None:
                layers.append(act)

    input_shape = (3, cfg.input_size, cfg.input_size)
    return Network(layers, input_shape=input_shape, config=cfg)


def build_main_network(cfg: NetworkConfig = None, seed: int = 0) -> Network:
    """The 18-layer grading network (default full-scale config)."""
    return build_network(cfg if cfg is not None else main_network_config(),
                         seed)


def build_reduced_network(input_size: int = 32, seed: int = 0) -> Network:
    return build_network(reduced_network_config(input_size), seed)


def build_blend_network(input_dim: int = BLEND_INPUT_DIM,
                        seed: int = 0) -> Network:
    """Feature blending head: dense 32 + ReLU, maxout pairs to 16, twice,
    then a 1-unit regression output."""
    if input_dim < 2:
        raise ConfigurationError("blend input dimension must be >= 2")
    layers = [
        Dense(input_dim, 32, rng=derive_rng(seed, "init", "blend.fc1"),
              name="fc1"),
        ReLU(name="act1"),
        Maxout(group=2, name="maxout1"),
        Dense(16, 32, rng=derive_rng(seed, "init", "blend.fc2"), name="fc2"),
        ReLU(name="act2"),
        Maxout(group=2, name="maxout2"),
        Dense(16, 1, rng=derive_rng(seed, "init", "blend.fc3"), name="fc3"),
    ]
    return Network(layers, input_shape=(input_dim,))


def predict(net: Network, batch: np.ndarray) -> np.ndarray:
    """Inference scores for a standardized batch, clamped to [0, 4]."""
    out = net.forward(batch, train=False)
    return np.clip(out, 0.0, 4.0)


def extract_features(net: Network, image: np.ndarray, passes: int,
                     rng: np.random.Generator, channel_stats,
                     color_stats=None, ranges=DEFAULT_RANGES) -> np.ndarray:
    """Feature descriptor: mean and population std over augmented passes.

    Runs the network body through its last max-pool on ``passes``
    independently augmented copies of one preprocessed uint8 image, then
    concatenates the elementwise mean and std of the flattened activations.
    ``ranges=None`` disables augmentation (identity passes). Descriptor
    length is twice the network's pooled feature size.
    """
    if passes < 2:
        raise ConfigurationError(f"feature extraction needs >= 2 passes, "
                                 f"got {passes}")
    per_pass = []
    for _ in range(passes):
        if ranges is None:
            params = identity_params()
            copy = image
        else:
            params = sample_params(rng, ranges)
            copy = apply_augment(image, params, color_stats)
        batch = copy.astype(np.float32).transpose(2, 0, 1)[None]
        batch = standardize(batch, channel_stats)
        per_pass.append(net.feature_forward(batch)[0])
    # float64 accumulation keeps identical passes' std at exactly zero.
    stack = np.stack(per_pass, axis=0).astype(np.float64)
    descriptor = np.concatenate([stack.mean(axis=0), stack.std(axis=0)])
    if not np.any(descriptor):
        warnings.warn("feature descriptor is all zeros; the network looks "
                      "untrained", RuntimeWarning, stacklevel=2)
    return descriptor.astype(np.float32)


def blend_digest(input_dim: int) -> str:
    """Architecture identifier for blend checkpoints (no config file)."""
    return f"blend:{input_dim}"


def save_model(path, net: Network, digest: str = "",
               extra_records=()) -> None:
    """Checkpoint a network's parameters (plus optional auxiliary records,
    e.g. optimizer state under a 'state.' prefix)."""
    records = list(net.parameters()) + list(extra_records)
    write_records(path, digest, records)


def _load_into(path, net: Network, expected_digest: str):
    digest, records = read_records(path)
    if digest and expected_digest and digest != expected_digest:
        raise CheckpointError(
            f"{path}: checkpoint architecture {digest[:16]!r} does not "
            f"match the requested {expected_digest[:16]!r}")
    param_names = {name for name, _ in net.parameters()}
    params = {n: a for n, a in records.items() if n in param_names}
    extras = {n: a for n, a in records.items() if n not in param_names}
    missing = param_names - set(params)
    if missing:
        raise CheckpointError(
            f"{path}: checkpoint is missing parameters {sorted(missing)[:4]}")
    net.set_parameters(params)
    return net, extras


def load_model(path, cfg: NetworkConfig, seed: int = 0):
    """Rebuild a network from its config and load checkpointed parameters.

    Returns (network, extras) where extras holds any non-parameter records
    (names outside the network's parameter set, e.g. optimizer state).
    """
    return _load_into(path, build_network(cfg, seed), config_digest(cfg))


def load_blend_model(path, input_dim: int = BLEND_INPUT_DIM, seed: int = 0):
    """Blend-network counterpart of load_model."""
    return _load_into(path, build_blend_network(input_dim, seed),
                      blend_digest(input_dim))
