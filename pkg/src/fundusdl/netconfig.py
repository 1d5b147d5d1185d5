"""Declarative network configs: INI-style text, canonical form, digest.

A config is a ``[network]`` section (input size) plus ordered ``[layer.NN]``
sections. Serialization is canonical (fixed section order, fixed key order
per kind), so the sha256 of the text identifies the architecture and is
embedded in checkpoints.
"""

import configparser
import hashlib
import io
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError

__all__ = ["LayerSpec", "NetworkConfig", "parse_network_config",
           "serialize_network_config", "load_network_config",
           "save_network_config", "config_digest", "main_network_config",
           "reduced_network_config"]

# Keys each layer kind accepts, in canonical serialization order.
_KIND_KEYS = {
    "conv": ("filters", "kernel", "stride", "padding", "activation"),
    "pool": ("kernel", "stride"),
    "flatten": (),
    "dense": ("units", "activation"),
    "dropout": ("rate",),
    "maxout": ("groups",),
}
_INT_KEYS = {"filters", "kernel", "stride", "padding", "units", "groups"}
_FLOAT_KEYS = {"rate"}
_ACTIVATIONS = ("none", "leaky_relu", "relu")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    options: tuple = field(default_factory=tuple)  # ordered (key, value)

    def get(self, key, default=None):
        for k, v in self.options:
            if k == key:
                return v
        return default


def layer(kind: str, **options) -> LayerSpec:
    """Build a validated LayerSpec with canonical key order."""
    if kind not in _KIND_KEYS:
        raise ConfigurationError(f"unknown layer kind {kind!r}")
    allowed = _KIND_KEYS[kind]
    unknown = set(options) - set(allowed)
    if unknown:
        raise ConfigurationError(
            f"layer kind {kind!r} does not accept {sorted(unknown)}")
    ordered = []
    for key in allowed:
        if key not in options:
            if key == "activation":
                options[key] = "none"
            else:
                raise ConfigurationError(f"{kind} layer missing key {key!r}")
        value = options[key]
        if key in _INT_KEYS:
            value = int(value)
            if value <= 0 and not (key == "padding" and value == 0):
                raise ConfigurationError(f"{kind}.{key} must be positive")
            if key == "padding" and value < 0:
                raise ConfigurationError("padding must be >= 0")
        elif key in _FLOAT_KEYS:
            value = float(value)
            if not 0.0 <= value < 1.0:
                raise ConfigurationError(f"dropout rate {value} outside [0, 1)")
        elif key == "activation":
            if value not in _ACTIVATIONS:
                raise ConfigurationError(
                    f"unknown activation {value!r}; expected one of "
                    f"{_ACTIVATIONS}")
        ordered.append((key, value))
    return LayerSpec(kind=kind, options=tuple(ordered))


@dataclass(frozen=True)
class NetworkConfig:
    input_size: int
    layers: tuple

    def __post_init__(self):
        if self.input_size <= 0:
            raise ConfigurationError("input_size must be positive")
        if not self.layers:
            raise ConfigurationError("config has no layers")
        last = self.layers[-1]
        if last.kind != "dense" or last.get("units") != 1:
            raise ConfigurationError(
                "final layer must be a 1-unit dense regression head")


def serialize_network_config(cfg: NetworkConfig) -> str:
    out = io.StringIO()
    out.write("[network]\n")
    out.write(f"input_size = {cfg.input_size}\n")
    for i, spec in enumerate(cfg.layers, start=1):
        out.write(f"\n[layer.{i:02d}]\n")
        out.write(f"kind = {spec.kind}\n")
        for key, value in spec.options:
            out.write(f"{key} = {value}\n")
    return out.getvalue()


def parse_network_config(text: str) -> NetworkConfig:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed network config: {exc}") from exc
    if "network" not in parser:
        raise ConfigurationError("config is missing the [network] section")
    try:
        input_size = parser.getint("network", "input_size")
    except (configparser.NoOptionError, ValueError) as exc:
        raise ConfigurationError(f"bad [network] input_size: {exc}") from exc

    sections = [s for s in parser.sections() if s.startswith("layer.")]
    try:
        sections.sort(key=lambda s: int(s.split(".", 1)[1]))
    except ValueError as exc:
        raise ConfigurationError(f"bad layer section name: {exc}") from exc
    if not sections:
        raise ConfigurationError("config defines no [layer.NN] sections")

    layers = []
    for name in sections:
        items = dict(parser.items(name))
        kind = items.pop("kind", None)
        if kind is None:
            raise ConfigurationError(f"[{name}] is missing 'kind'")
        try:
            layers.append(layer(kind, **items))
        except ConfigurationError as exc:
            raise ConfigurationError(f"[{name}]: {exc}") from exc
    return NetworkConfig(input_size=input_size, layers=tuple(layers))


def load_network_config(path) -> NetworkConfig:
    return parse_network_config(Path(path).read_text())


def save_network_config(cfg: NetworkConfig, path) -> None:
    Path(path).write_text(serialize_network_config(cfg))


def config_digest(cfg: NetworkConfig) -> str:
    """sha256 hex of the canonical serialization."""
    text = serialize_network_config(cfg)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# Conv schedule shared by the full and reduced presets:
# (stride, padding) per conv, kernel 4 throughout.
_CONV_GEOMETRY = ((2, 1), (1, 1), (2, 0), (1, 2), (1, 2),
                  (1, 2), (1, 2), (1, 2), (1, 2))
# Pools follow convs 2, 4, 6, 7, 8, 9 (six 3x3 pools).
_POOL_AFTER = (2, 4, 6, 7, 8, 9)


def _config_from_widths(input_size, conv_filters, dense_units, pool_stride,
                        dropout=0.5):
    layers = []
    for i, ((stride, padding), filters) in enumerate(
            zip(_CONV_GEOMETRY, conv_filters), start=1):
        layers.append(layer("conv", filters=filters, kernel=4, stride=stride,
                            padding=padding, activation="leaky_relu"))
        if i in _POOL_AFTER:
            layers.append(layer("pool", kernel=3, stride=pool_stride))
    layers.append(layer("flatten"))
    layers.append(layer("dense", units=dense_units, activation="none"))
    layers.append(layer("dropout", rate=dropout))
    layers.append(layer("dense", units=dense_units, activation="none"))
    layers.append(layer("dropout", rate=dropout))
    layers.append(layer("dense", units=1, activation="none"))
    return NetworkConfig(input_size=input_size, layers=tuple(layers))


def main_network_config() -> NetworkConfig:
    """The full-scale 512-pixel architecture."""
    return _config_from_widths(
        input_size=512,
        conv_filters=(32, 32, 64, 64, 128, 128, 256, 384, 512),
        dense_units=1024, pool_stride=2)


def reduced_network_config(input_size: int = 32,
                           dropout: float = 0.5) -> NetworkConfig:
    """Same layer sequence at one-eighth width with stride-1 pools, sized
    for small inputs (default 32 pixels)."""
    return _config_from_widths(
        input_size=input_size,
        conv_filters=(4, 4, 8, 8, 16, 16, 32, 48, 64),
        dense_units=128, pool_stride=1, dropout=dropout)
