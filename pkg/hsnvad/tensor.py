"""Dense float64 tensors with a recorded tape for reverse-mode differentiation.

Primitives evaluate eagerly. While a :class:`Tape` is active in the current
context, every primitive with at least one input that requires a gradient is
recorded as a :class:`Node`; :meth:`Tape.backward` replays the adjoints of the
recorded nodes in reverse order.
"""

from __future__ import annotations

import contextlib
import contextvars
import typing

import numpy as np
import numpy.typing as npt

from .errors import RejectedInputError

Array = npt.NDArray[np.float64]
Activation = typing.Literal["none", "relu", "sigmoid", "tanh"]
PoolMode = typing.Literal["max", "mean", "sum"]
Operator = typing.Literal[
    "add",
    "subtract",
    "multiply",
    "negate",
    "activate",
    "affine",
    "matmul",
    "conv1d",
    "lstm",
    "pool",
    "concat",
    "reshape",
    "absolute",
    "square",
]
OPERATORS = typing.cast(tuple[Operator, ...], typing.get_args(Operator))


class Tensor:
    __slots__ = ("values", "requires_grad", "grad")

    def __init__(self, values: npt.ArrayLike, requires_grad: bool = False) -> None:
        self.values: Array = np.asarray(values, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Array | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.values.shape)

    @property
    def ndim(self) -> int:
        return self.values.ndim

    def item(self) -> float:
        if self.values.size != 1:
            raise RejectedInputError(
                f"only single-element tensors convert to float, not {self.shape}"
            )
        return float(self.values.reshape(-1)[0])

    def __add__(self, other: Tensor | float) -> Tensor:
        return add(self, other)

    def __radd__(self, other: float) -> Tensor:
        return add(other, self)

    def __sub__(self, other: Tensor | float) -> Tensor:
        return subtract(self, other)

    def __rsub__(self, other: float) -> Tensor:
        return subtract(other, self)

    def __mul__(self, other: Tensor | float) -> Tensor:
        return multiply(self, other)

    def __rmul__(self, other: float) -> Tensor:
        return multiply(other, self)

    def __neg__(self) -> Tensor:
        return negate(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class Node(typing.NamedTuple):
    operator: Operator
    inputs: tuple[Tensor, ...]
    output: Tensor
    attrs: dict[str, typing.Any]


_active_tape: contextvars.ContextVar[Tape | None] = contextvars.ContextVar(
    "active_tape", default=None
)
_faults: contextvars.ContextVar[frozenset[str]] = contextvars.ContextVar(
    "faults", default=frozenset()
)


class Tape:
    """Ordered record of primitive applications, owned by one training run."""

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self._tokens: list[contextvars.Token[Tape | None]] = []

    def __enter__(self) -> Tape:
        self._tokens.append(_active_tape.set(self))
        return self

    def __exit__(self, *exc: object) -> None:
        _active_tape.reset(self._tokens.pop())

    def record(
        self,
        operator: Operator,
        inputs: tuple[Tensor, ...],
        output: Tensor,
        attrs: dict[str, typing.Any],
    ) -> None:
        self.nodes.append(Node(operator, inputs, output, attrs))

    def backward(self, loss: Tensor) -> None:
        if loss.values.size != 1:
            raise RejectedInputError(
                f"backward needs a scalar loss, not shape {loss.shape}"
            )

        leaves: dict[int, Tensor] = {}
        for node in self.nodes:
            for tensor in (*node.inputs, node.output):
                if tensor.requires_grad:
                    leaves[id(tensor)] = tensor

        grads: dict[int, Array] = {id(loss): np.ones_like(loss.values)}
        faults = _faults.get()
        for node in reversed(self.nodes):
            upstream = grads.get(id(node.output))
            if upstream is None:
                continue
            adjoints = _adjoint(node, upstream)
            for tensor, adjoint in zip(node.inputs, adjoints):
                if adjoint is None or not tensor.requires_grad:
                    continue
                if node.operator in faults:
                    adjoint = adjoint * 2.0
                if id(tensor) in grads:
                    grads[id(tensor)] = grads[id(tensor)] + adjoint
                else:
                    grads[id(tensor)] = adjoint

        for key, tensor in leaves.items():
            grad = grads.get(key)
            tensor.grad = (
                np.zeros_like(tensor.values)
                if grad is None
                else np.asarray(grad, dtype=np.float64).reshape(tensor.shape)
            )
        if loss.requires_grad:
            loss.grad = np.ones_like(loss.values)


@contextlib.contextmanager
def inference() -> typing.Iterator[None]:
    """Evaluate primitives without recording onto any enclosing tape."""
    token = _active_tape.set(None)
    try:
        yield
    finally:
        _active_tape.reset(token)


@contextlib.contextmanager
def fault_injection(operator: Operator) -> typing.Iterator[None]:
    """Double the adjoint of ``operator`` during backward (gradient-check hook)."""
    if operator not in OPERATORS:
        raise RejectedInputError(f"unknown operator: {operator!r}")
    token = _faults.set(_faults.get() | {operator})
    try:
        yield
    finally:
        _faults.reset(token)


def _lift(value: Tensor | float) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _emit(
    operator: Operator,
    inputs: tuple[Tensor, ...],
    values: Array,
    **attrs: typing.Any,
) -> Tensor:
    requires_grad = any(tensor.requires_grad for tensor in inputs)
    output = Tensor(values, requires_grad)
    tape = _active_tape.get()
    if tape is not None and requires_grad:
        tape.record(operator, inputs, output, attrs)
    return output


def _sigmoid(z: Array) -> Array:
    return typing.cast(Array, 0.5 * (1.0 + np.tanh(0.5 * z)))


def _apply_activation(z: Array, activation: Activation) -> Array:
    match activation:
        case "none":
            return z
        case "relu":
            return np.maximum(z, 0.0)
        case "sigmoid":
            return _sigmoid(z)
        case "tanh":
            return np.tanh(z)
    raise RejectedInputError(f"unknown activation: {activation!r}")


def _activation_adjoint(y: Array, upstream: Array, activation: Activation) -> Array:
    match activation:
        case "none":
            return upstream
        case "relu":
            return upstream * (y > 0.0)
        case "sigmoid":
            return upstream * y * (1.0 - y)
        case "tanh":
            return upstream * (1.0 - y * y)
    raise RejectedInputError(f"unknown activation: {activation!r}")


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise RejectedInputError(
            f"shapes {a.shape} and {b.shape} cannot be broadcast"
        ) from None


def add(a: Tensor | float, b: Tensor | float) -> Tensor:
    a, b = _lift(a), _lift(b)
    _broadcast_shape(a, b)
    return _emit("add", (a, b), a.values + b.values)


def subtract(a: Tensor | float, b: Tensor | float) -> Tensor:
    a, b = _lift(a), _lift(b)
    _broadcast_shape(a, b)
    return _emit("subtract", (a, b), a.values - b.values)


def multiply(a: Tensor | float, b: Tensor | float) -> Tensor:
    a, b = _lift(a), _lift(b)
    _broadcast_shape(a, b)
    return _emit("multiply", (a, b), a.values * b.values)


def negate(x: Tensor) -> Tensor:
    return _emit("negate", (x,), -x.values)


def absolute(x: Tensor) -> Tensor:
    return _emit("absolute", (x,), np.abs(x.values))


def square(x: Tensor) -> Tensor:
    return _emit("square", (x,), x.values * x.values)


def activate(x: Tensor, activation: Activation) -> Tensor:
    if activation == "none":
        return x
    values = _apply_activation(x.values, activation)
    return _emit("activate", (x,), values, activation=activation)


def affine(
    x: Tensor, weight: Tensor, bias: Tensor, activation: Activation = "none"
) -> Tensor:
    """``act(x @ weight + bias)`` over the last axis of ``x``."""
    if weight.ndim != 2 or x.ndim < 1 or x.shape[-1] != weight.shape[0]:
        raise RejectedInputError(
            f"affine shape mismatch: input {x.shape}, weight {weight.shape}"
        )
    if bias.shape != (weight.shape[1],):
        raise RejectedInputError(
            f"affine bias shape {bias.shape} does not match weight {weight.shape}"
        )
    values = _apply_activation(x.values @ weight.values + bias.values, activation)
    return _emit("affine", (x, weight, bias), values, activation=activation)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise RejectedInputError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return _emit("matmul", (a, b), a.values @ b.values)


def conv1d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor,
    dilation: int = 1,
    activation: Activation = "none",
) -> Tensor:
    """Dilated temporal convolution with zero "same" padding.

    ``x`` is ``L x C_in`` and ``weight`` is ``k x C_in x C_out``; the output
    keeps length ``L``. Padding is split ``left = (k - 1) * d // 2`` and the
    remainder on the right.
    """
    if weight.ndim != 3 or weight.shape[0] < 1:
        raise RejectedInputError(
            f"conv1d kernel must be k x C_in x C_out with k >= 1, not {weight.shape}"
        )
    if dilation < 1:
        raise RejectedInputError(f"conv1d dilation must be >= 1, not {dilation}")
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] != weight.shape[1]:
        raise RejectedInputError(
            f"conv1d shape mismatch: input {x.shape}, kernel {weight.shape}"
        )
    if bias.shape != (weight.shape[2],):
        raise RejectedInputError(
            f"conv1d bias shape {bias.shape} does not match kernel {weight.shape}"
        )

    kernel, channels, out_channels = weight.shape
    length = x.shape[0]
    total = (kernel - 1) * dilation
    left = total // 2
    padded = np.zeros((length + total, channels))
    padded[left : left + length] = x.values
    columns = np.concatenate(
        [padded[j * dilation : j * dilation + length] for j in range(kernel)], axis=1
    )
    flat = weight.values.reshape(kernel * channels, out_channels)
    values = _apply_activation(columns @ flat + bias.values, activation)
    return _emit(
        "conv1d",
        (x, weight, bias),
        values,
        columns=columns,
        dilation=dilation,
        left=left,
        activation=activation,
    )


def lstm(
    seq: Tensor, input_weight: Tensor, hidden_weight: Tensor, bias: Tensor
) -> Tensor:
    """Single-layer LSTM from zero states, emitting the hidden state per step.

    ``seq`` is ``L x C`` or a batch ``B x L x C``. Gate columns are ordered
    input, forget, output, candidate.
    """
    squeeze = seq.ndim == 2
    x = seq.values[None] if squeeze else seq.values
    if x.ndim != 3 or x.shape[1] < 1:
        raise RejectedInputError(
            f"lstm needs L x C or B x L x C input, not {seq.shape}"
        )
    batch, steps, channels = x.shape
    hidden = hidden_weight.shape[0]
    if (
        input_weight.shape != (channels, 4 * hidden)
        or hidden_weight.shape != (hidden, 4 * hidden)
        or bias.shape != (4 * hidden,)
    ):
        raise RejectedInputError(
            f"lstm parameter shapes {input_weight.shape}, {hidden_weight.shape}, "
            f"{bias.shape} do not fit input {seq.shape}"
        )

    projected = x @ input_weight.values + bias.values
    h = np.zeros((batch, hidden))
    c = np.zeros((batch, hidden))
    outputs = np.empty((batch, steps, hidden))
    cache = []
    for t in range(steps):
        z = projected[:, t] + h @ hidden_weight.values
        i = _sigmoid(z[:, :hidden])
        f = _sigmoid(z[:, hidden : 2 * hidden])
        o = _sigmoid(z[:, 2 * hidden : 3 * hidden])
        g = np.tanh(z[:, 3 * hidden :])
        c_prev, h_prev = c, h
        c = f * c_prev + i * g
        tanh_c = np.tanh(c)
        h = o * tanh_c
        outputs[:, t] = h
        cache.append((i, f, o, g, c_prev, h_prev, tanh_c))

    values = outputs[0] if squeeze else outputs
    return _emit(
        "lstm", (seq, input_weight, hidden_weight, bias), values, cache=cache
    )


def pool(x: Tensor, axis: int, mode: PoolMode) -> Tensor:
    """Reduce ``axis``; max routes its gradient to the first maximal entry."""
    if not -x.ndim <= axis < x.ndim:
        raise RejectedInputError(f"axis {axis} out of range for shape {x.shape}")
    axis %= x.ndim
    if x.shape[axis] < 1:
        raise RejectedInputError(f"cannot pool over empty axis {axis} of {x.shape}")
    match mode:
        case "max":
            index = np.argmax(x.values, axis=axis)
            values = np.take_along_axis(
                x.values, np.expand_dims(index, axis), axis=axis
            ).squeeze(axis)
            return _emit("pool", (x,), values, axis=axis, mode=mode, index=index)
        case "mean":
            values = x.values.mean(axis=axis)
        case "sum":
            values = x.values.sum(axis=axis)
        case _:
            raise RejectedInputError(f"unknown pool mode: {mode!r}")
    return _emit("pool", (x,), values, axis=axis, mode=mode)


def concat(tensors: typing.Sequence[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise RejectedInputError("concat needs at least one tensor")
    first = tensors[0]
    axis %= max(first.ndim, 1)
    for tensor in tensors[1:]:
        if tensor.ndim != first.ndim or any(
            a != b
            for dim, (a, b) in enumerate(zip(tensor.shape, first.shape))
            if dim != axis
        ):
            raise RejectedInputError(
                f"concat extent mismatch on axis {axis}: {first.shape} and "
                f"{tensor.shape}"
            )
    values = np.concatenate([tensor.values for tensor in tensors], axis=axis)
    sizes = [tensor.shape[axis] for tensor in tensors]
    return _emit("concat", tuple(tensors), values, axis=axis, sizes=sizes)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    try:
        values = x.values.reshape(shape)
    except ValueError:
        raise RejectedInputError(f"cannot reshape {x.shape} into {shape}") from None
    return _emit("reshape", (x,), values)


def total(x: Tensor) -> Tensor:
    return pool(reshape(x, (-1,)), 0, "sum")


def average(x: Tensor) -> Tensor:
    return pool(reshape(x, (-1,)), 0, "mean")


def _adjoint(node: Node, upstream: Array) -> tuple[Array | None, ...]:
    inputs = node.inputs
    match node.operator:
        case "add":
            return (
                _unbroadcast(upstream, inputs[0].shape),
                _unbroadcast(upstream, inputs[1].shape),
            )

        case "subtract":
            return (
                _unbroadcast(upstream, inputs[0].shape),
                _unbroadcast(-upstream, inputs[1].shape),
            )

        case "multiply":
            a, b = inputs
            return (
                _unbroadcast(upstream * b.values, a.shape),
                _unbroadcast(upstream * a.values, b.shape),
            )

        case "negate":
            return (-upstream,)

        case "absolute":
            return (upstream * np.sign(inputs[0].values),)

        case "square":
            return (2.0 * inputs[0].values * upstream,)

        case "activate":
            return (
                _activation_adjoint(
                    node.output.values, upstream, node.attrs["activation"]
                ),
            )

        case "affine":
            x, weight, _ = inputs
            dz = _activation_adjoint(
                node.output.values, upstream, node.attrs["activation"]
            )
            flat_x = x.values.reshape(-1, weight.shape[0])
            flat_dz = dz.reshape(-1, weight.shape[1])
            return (
                dz @ weight.values.T,
                flat_x.T @ flat_dz,
                flat_dz.sum(axis=0),
            )

        case "matmul":
            a, b = inputs
            return (upstream @ b.values.T, a.values.T @ upstream)

        case "conv1d":
            x, weight, _ = inputs
            kernel, channels, out_channels = weight.shape
            length = x.shape[0]
            dilation = node.attrs["dilation"]
            left = node.attrs["left"]
            dz = _activation_adjoint(
                node.output.values, upstream, node.attrs["activation"]
            )
            flat = weight.values.reshape(kernel * channels, out_channels)
            dcolumns = dz @ flat.T
            dpadded = np.zeros((length + (kernel - 1) * dilation, channels))
            for j in range(kernel):
                dpadded[j * dilation : j * dilation + length] += dcolumns[
                    :, j * channels : (j + 1) * channels
                ]
            return (
                dpadded[left : left + length],
                (node.attrs["columns"].T @ dz).reshape(weight.shape),
                dz.sum(axis=0),
            )

        case "lstm":
            seq, input_weight, hidden_weight, _ = inputs
            squeeze = seq.ndim == 2
            x = seq.values[None] if squeeze else seq.values
            dout = upstream[None] if squeeze else upstream
            batch, steps, _ = x.shape
            hidden = hidden_weight.shape[0]
            dprojected = np.empty((batch, steps, 4 * hidden))
            dhidden_weight = np.zeros_like(hidden_weight.values)
            dh_next = np.zeros((batch, hidden))
            dc_next = np.zeros((batch, hidden))
            for t in reversed(range(steps)):
                i, f, o, g, c_prev, h_prev, tanh_c = node.attrs["cache"][t]
                dh = dout[:, t] + dh_next
                dc = dh * o * (1.0 - tanh_c * tanh_c) + dc_next
                dz = np.concatenate(
                    [
                        dc * g * i * (1.0 - i),
                        dc * c_prev * f * (1.0 - f),
                        dh * tanh_c * o * (1.0 - o),
                        dc * i * (1.0 - g * g),
                    ],
                    axis=1,
                )
                dprojected[:, t] = dz
                dhidden_weight += h_prev.T @ dz
                dh_next = dz @ hidden_weight.values.T
                dc_next = dc * f
            flat_dz = dprojected.reshape(-1, 4 * hidden)
            dx = dprojected @ input_weight.values.T
            return (
                dx[0] if squeeze else dx,
                x.reshape(-1, x.shape[2]).T @ flat_dz,
                dhidden_weight,
                flat_dz.sum(axis=0),
            )

        case "pool":
            (x,) = inputs
            axis = node.attrs["axis"]
            expanded = np.expand_dims(upstream, axis)
            match node.attrs["mode"]:
                case "max":
                    dx = np.zeros_like(x.values)
                    np.put_along_axis(
                        dx, np.expand_dims(node.attrs["index"], axis), expanded, axis
                    )
                    return (dx,)
                case "mean":
                    return (np.broadcast_to(expanded / x.shape[axis], x.shape).copy(),)
                case "sum":
                    return (np.broadcast_to(expanded, x.shape).copy(),)

        case "concat":
            offsets = np.cumsum(node.attrs["sizes"])[:-1]
            return tuple(np.split(upstream, offsets, axis=node.attrs["axis"]))

        case "reshape":
            return (upstream.reshape(inputs[0].shape),)

    raise RuntimeError(f"unknown tape node: {node.operator!r}")
