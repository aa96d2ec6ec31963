"""Dense feed-forward networks with smooth activations.

Networks are evaluated from an explicit flat parameter vector, so the same
forward code runs on plain arrays (fast path) and on tape :class:`Var`
operands (when a loss is being differentiated with respect to the
parameters).  Input Jacobians are accumulated in closed form, layer by
layer (forward-mode), never by finite differences.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionMismatchError
from . import autodiff as ad

__all__ = [
    "NetworkSpec",
    "ParameterVector",
    "init_params",
    "param_count",
    "net_forward",
    "net_input_jacobian",
    "net_forward_and_input_jacobian",
    "save_network",
    "load_network",
    "ACTIVATIONS",
]


@dataclass(frozen=True)
class _Activation:
    fn: callable  # value
    deriv: callable  # first derivative, itself differentiable on the tape


# Only activations that are at least C^2 belong here: the training loss
# contains first input-derivatives of the network, so parameter gradients
# involve second mixed derivatives.
ACTIVATIONS = {
    "softplus": _Activation(ad.softplus, ad.sigmoid),
    "tanh": _Activation(ad.tanh, lambda x: 1.0 - ad.tanh(x) * ad.tanh(x)),
}


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture of a dense network: dims and activation name."""

    input_dim: int
    output_dim: int
    hidden_layers: tuple[int, ...] = (64, 64)
    activation: str = "softplus"

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        dims = (self.input_dim, self.output_dim, *self.hidden_layers)
        if any(d < 1 for d in dims):
            raise DimensionMismatchError(f"all network dimensions must be >= 1, got {dims}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}; known: {sorted(ACTIVATIONS)}")

    @property
    def layer_dims(self) -> tuple[tuple[int, int], ...]:
        """(fan_in, fan_out) of each linear layer, in declaration order."""
        widths = (self.input_dim, *self.hidden_layers, self.output_dim)
        return tuple(zip(widths[:-1], widths[1:]))


@dataclass(frozen=True)
class LayerSlice:
    """Where one layer's weight matrix and bias live in the flat vector."""

    weights: slice
    bias: slice
    shape: tuple[int, int]  # (fan_out, fan_in)


def _build_layout(spec: NetworkSpec) -> tuple[LayerSlice, ...]:
    layout = []
    offset = 0
    for fan_in, fan_out in spec.layer_dims:
        w = slice(offset, offset + fan_out * fan_in)
        offset = w.stop
        b = slice(offset, offset + fan_out)
        offset = b.stop
        layout.append(LayerSlice(w, b, (fan_out, fan_in)))
    return tuple(layout)


def param_count(spec: NetworkSpec) -> int:
    return sum(fo * fi + fo for fi, fo in spec.layer_dims)


@dataclass
class ParameterVector:
    """Flat parameter storage plus the per-layer slice layout.

    ``values`` is a float64 ndarray in normal use; during gradient
    computation it may be a tape Var with the same layout.
    """

    values: np.ndarray
    layout: tuple[LayerSlice, ...] = field(repr=False)

    def __len__(self) -> int:
        return int(ad.value_of(self.values).shape[0])

    def copy(self) -> "ParameterVector":
        return ParameterVector(np.array(ad.value_of(self.values)), self.layout)

    @classmethod
    def zeros(cls, spec: NetworkSpec) -> "ParameterVector":
        return cls(np.zeros(param_count(spec)), _build_layout(spec))

    @classmethod
    def from_values(cls, spec: NetworkSpec, values) -> "ParameterVector":
        values = np.asarray(values, dtype=np.float64)
        expected = param_count(spec)
        if values.shape != (expected,):
            raise DimensionMismatchError(
                f"parameter vector has shape {values.shape}, spec implies ({expected},)"
            )
        return cls(values, _build_layout(spec))


def init_params(spec: NetworkSpec, seed_or_rng) -> ParameterVector:
    """Seeded Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases."""
    rng = seed_or_rng if isinstance(seed_or_rng, np.random.Generator) else np.random.default_rng(seed_or_rng)
    params = ParameterVector.zeros(spec)
    for layer in params.layout:
        fan_out, fan_in = layer.shape
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        params.values[layer.weights] = rng.uniform(-bound, bound, fan_out * fan_in)
    return params


def _check_input(spec: NetworkSpec, x) -> None:
    xv = ad.value_of(x)
    if xv.ndim not in (1, 2) or xv.shape[-1] != spec.input_dim:
        raise DimensionMismatchError(
            f"input has shape {xv.shape}, expected (..., {spec.input_dim})"
        )


def _layer_params(params: ParameterVector, layer: LayerSlice):
    w = params.values[layer.weights].reshape(layer.shape)
    b = params.values[layer.bias]
    return w, b


def net_forward(spec: NetworkSpec, params: ParameterVector, x):
    """Evaluate the network at ``x`` (shape (in,) or batched (B, in)).

    Hidden layers use the spec activation; the output layer is linear.
    """
    _check_input(spec, x)
    act = ACTIVATIONS[spec.activation].fn
    layout = params.layout
    a = x
    for k, layer in enumerate(layout):
        w, b = _layer_params(params, layer)
        z = a @ w.T + b
        a = act(z) if k < len(layout) - 1 else z
    return a


def net_forward_and_input_jacobian(spec: NetworkSpec, params: ParameterVector, x):
    """Network output together with its exact Jacobian d out / d x.

    The Jacobian is accumulated forward through the layers:
    J_k = W_k diag(act'(z_{k-1})) J_{k-1}.  Returns (y, J) with J of shape
    (out, in) or (B, out, in) for batched input.
    """
    _check_input(spec, x)
    act = ACTIVATIONS[spec.activation].fn
    deriv = ACTIVATIONS[spec.activation].deriv
    layout = params.layout
    a = x
    jac = None
    z_prev = None
    for k, layer in enumerate(layout):
        w, b = _layer_params(params, layer)
        if k == 0:
            jac = w
        else:
            s = deriv(z_prev)
            jac = w @ (s.reshape(s.shape + (1,)) * jac)
        z = a @ w.T + b
        if k < len(layout) - 1:
            a = act(z)
            z_prev = z
        else:
            a = z
    if ad.value_of(x).ndim == 2 and ad.value_of(jac).ndim == 2:
        # purely linear net on a batch: tile the constant Jacobian
        jac = jac * np.ones((ad.value_of(x).shape[0], 1, 1))
    return a, jac


def net_input_jacobian(spec: NetworkSpec, params: ParameterVector, x):
    """Exact analytic Jacobian of the network output with respect to ``x``."""
    return net_forward_and_input_jacobian(spec, params, x)[1]


# ---- checkpoint format --------------------------------------------------------
#
# Text format, one value per line as C99 hex floats (exact round-trip):
#
#   net-checkpoint v1
#   input_dim <int>
#   output_dim <int>
#   hidden <int> <int> ...        (line omitted when there are no hidden layers)
#   activation <name>
#   seed <int>                    (-1 when unknown)
#   count <int>
#   <count hex-float lines: row-major weights then bias, layer by layer>

_MAGIC = "net-checkpoint v1"


def save_network(stream_or_path, spec: NetworkSpec, params: ParameterVector, seed: int = -1) -> None:
    close = False
    if isinstance(stream_or_path, (str, bytes)) or hasattr(stream_or_path, "__fspath__"):
        stream = open(stream_or_path, "w")
        close = True
    else:
        stream = stream_or_path
    try:
        values = ad.value_of(params.values)
        stream.write(f"{_MAGIC}\n")
        stream.write(f"input_dim {spec.input_dim}\n")
        stream.write(f"output_dim {spec.output_dim}\n")
        if spec.hidden_layers:
            stream.write("hidden " + " ".join(str(h) for h in spec.hidden_layers) + "\n")
        stream.write(f"activation {spec.activation}\n")
        stream.write(f"seed {seed}\n")
        stream.write(f"count {values.shape[0]}\n")
        for v in values:
            stream.write(float(v).hex() + "\n")
    finally:
        if close:
            stream.close()


def load_network(stream_or_path) -> tuple[NetworkSpec, ParameterVector, int]:
    close = False
    if isinstance(stream_or_path, (str, bytes)) or hasattr(stream_or_path, "__fspath__"):
        stream = open(stream_or_path)
        close = True
    else:
        stream = stream_or_path
    try:
        if stream.readline().strip() != _MAGIC:
            raise ValueError("not a network checkpoint")
        fields: dict[str, str] = {}
        while True:
            line = stream.readline()
            key, _, rest = line.strip().partition(" ")
            fields[key] = rest
            if key == "count":
                break
        spec = NetworkSpec(
            input_dim=int(fields["input_dim"]),
            output_dim=int(fields["output_dim"]),
            hidden_layers=tuple(int(h) for h in fields.get("hidden", "").split()) if fields.get("hidden") else (),
            activation=fields["activation"],
        )
        count = int(fields["count"])
        values = np.array([float.fromhex(stream.readline().strip()) for _ in range(count)])
        return spec, ParameterVector.from_values(spec, values), int(fields["seed"])
    finally:
        if close:
            stream.close()


def dumps_network(spec: NetworkSpec, params: ParameterVector, seed: int = -1) -> str:
    buf = io.StringIO()
    save_network(buf, spec, params, seed)
    return buf.getvalue()
