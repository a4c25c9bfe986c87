"""Declarative network structure: layer specs, shape arithmetic and the
line-oriented structure file format.

A network is an ordered stack: one leaf layer, alternating product/sum
layers, optionally a class-sum layer, and a root sum last.  Grid sizes are
not part of the file; they come from the data (or a --shape flag).
"""

from dataclasses import dataclass, field
from typing import Optional, Union

__all__ = [
    "SpatialShape",
    "GaussianLeaf",
    "IndicatorLeaf",
    "SpatialSum",
    "GCLProduct",
    "ClassSums",
    "RootSum",
    "LayerSpec",
    "NetworkSpec",
    "StructureError",
    "StructureParseError",
    "parse_structure",
    "render_structure",
]


class StructureError(ValueError):
    """Structural inconsistency (shapes, layer ordering, channel counts)."""

    def __init__(self, message, layer_index=None):
        if layer_index is not None:
            message = f"layer {layer_index}: {message}"
        super().__init__(message)
        self.layer_index = layer_index


class StructureParseError(ValueError):
    """Malformed structure file line."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class SpatialShape:
    height: int
    width: int
    channels: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1 or self.channels < 1:
            raise StructureError(f"all dimensions must be >= 1, got {self}")

    @property
    def cells(self) -> int:
        return self.height * self.width

    @property
    def size(self) -> int:
        return self.height * self.width * self.channels


@dataclass(frozen=True)
class GaussianLeaf:
    components: int  # per-pixel mixture component count

    kind = "gaussian_leaf"


@dataclass(frozen=True)
class IndicatorLeaf:
    arity: int  # states per discrete variable

    kind = "indicator_leaf"


@dataclass(frozen=True)
class SpatialSum:
    channels: int  # output mixtures per cell, weights tied across cells

    kind = "spatial_sum"


@dataclass(frozen=True)
class GCLProduct:
    """Log-space product layer realized as a convolution with one-hot kernels.

    channel mode: ``("onehot", n)`` enumerates the first n channel
    combinations in lexicographic order; ``"depthwise"`` keeps one output
    channel per input channel (sum pooling in log space).
    """

    kernel: tuple  # (kh, kw)
    stride: tuple = (1, 1)
    dilation: tuple = (1, 1)
    padding: str = "full"  # "full" or "none"
    channel_mode: Union[str, tuple] = "depthwise"

    kind = "gclp"

    def __post_init__(self):
        kh, kw = self.kernel
        sh, sw = self.stride
        dh, dw = self.dilation
        if min(kh, kw) < 1 or min(sh, sw) < 1 or min(dh, dw) < 1:
            raise StructureError(f"kernel/stride/dilation must be >= 1, got {self}")
        if self.padding not in ("full", "none"):
            raise StructureError(f"padding must be 'full' or 'none', got {self.padding!r}")
        if isinstance(self.channel_mode, tuple):
            mode, n = self.channel_mode
            if mode != "onehot" or n < 1:
                raise StructureError(f"bad channel mode {self.channel_mode!r}")
        elif self.channel_mode != "depthwise":
            raise StructureError(f"bad channel mode {self.channel_mode!r}")

    def pad_amount(self) -> tuple:
        """Padding cells per side per axis: (k-1)*d for full padding."""
        if self.padding == "none":
            return (0, 0)
        return ((self.kernel[0] - 1) * self.dilation[0],
                (self.kernel[1] - 1) * self.dilation[1])


@dataclass(frozen=True)
class ClassSums:
    classes: int

    kind = "class_sums"


@dataclass(frozen=True)
class RootSum:
    kind = "root"


LayerSpec = Union[GaussianLeaf, IndicatorLeaf, SpatialSum, GCLProduct, ClassSums, RootSum]

_LEAF_KINDS = (GaussianLeaf, IndicatorLeaf)


def _conv_out(size: int, k: int, s: int, d: int, pad: int) -> int:
    extent = (k - 1) * d + 1
    out = (size + 2 * pad - extent) // s + 1
    return out


@dataclass(frozen=True)
class NetworkSpec:
    """Input grid size plus the ordered layer stack (leaf first, root last)."""

    height: int
    width: int
    layers: tuple
    source_text: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise StructureError("input grid dimensions must be >= 1")
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if not layers:
            raise StructureError("empty layer stack")
        if not isinstance(layers[0], _LEAF_KINDS):
            raise StructureError("first layer must be a leaf layer", 0)
        for i, layer in enumerate(layers[1:], start=1):
            if isinstance(layer, _LEAF_KINDS):
                raise StructureError("only one leaf layer allowed", i)
        if not isinstance(layers[-1], RootSum):
            raise StructureError("last layer must be the root sum", len(layers) - 1)
        for i, layer in enumerate(layers[:-1]):
            if isinstance(layer, RootSum):
                raise StructureError("root sum must be last", i)
        class_positions = [i for i, l in enumerate(layers) if isinstance(l, ClassSums)]
        if len(class_positions) > 1:
            raise StructureError("at most one class-sum layer", class_positions[1])
        if class_positions and class_positions[0] != len(layers) - 2:
            raise StructureError("class sums must immediately precede the root",
                                 class_positions[0])
        self.layer_shapes()  # fail fast on shape arithmetic

    @property
    def n_variables(self) -> int:
        return self.height * self.width

    @property
    def leaf(self) -> LayerSpec:
        return self.layers[0]

    @property
    def is_discriminative(self) -> bool:
        return any(isinstance(l, ClassSums) for l in self.layers)

    def layer_shapes(self) -> list:
        """Output SpatialShape of every layer, checking consistency."""
        shapes = []
        for i, layer in enumerate(self.layers):
            if isinstance(layer, GaussianLeaf):
                cur = SpatialShape(self.height, self.width, layer.components)
            elif isinstance(layer, IndicatorLeaf):
                cur = SpatialShape(self.height, self.width, layer.arity)
            elif isinstance(layer, SpatialSum):
                cur = SpatialShape(cur.height, cur.width, layer.channels)
            elif isinstance(layer, GCLProduct):
                ph, pw = layer.pad_amount()
                h = _conv_out(cur.height, layer.kernel[0], layer.stride[0],
                              layer.dilation[0], ph)
                w = _conv_out(cur.width, layer.kernel[1], layer.stride[1],
                              layer.dilation[1], pw)
                if h < 1 or w < 1:
                    raise StructureError(
                        f"product kernel {layer.kernel} dilation {layer.dilation} "
                        f"does not fit a {cur.height}x{cur.width} grid", i)
                if layer.channel_mode == "depthwise":
                    c = cur.channels
                else:
                    t = layer.kernel[0] * layer.kernel[1]
                    c = layer.channel_mode[1]
                    if c > cur.channels ** t:
                        raise StructureError(
                            f"onehot:{c} exceeds {cur.channels}^{t} channel combinations", i)
                cur = SpatialShape(h, w, c)
            elif isinstance(layer, ClassSums):
                cur = SpatialShape(1, 1, layer.classes)
            elif isinstance(layer, RootSum):
                cur = SpatialShape(1, 1, 1)
            else:
                raise StructureError(f"unknown layer {layer!r}", i)
            shapes.append(cur)
        return shapes


def _parse_pair(text: str, what: str, line_no: int) -> tuple:
    parts = text.split("x")
    if len(parts) != 2:
        raise StructureParseError(line_no, f"{what} must look like AxB, got {text!r}")
    try:
        return (int(parts[0]), int(parts[1]))
    except ValueError:
        raise StructureParseError(line_no, f"{what} must be integers, got {text!r}")


def _parse_fields(tokens, line_no):
    fields = {}
    for tok in tokens:
        if "=" not in tok:
            raise StructureParseError(line_no, f"expected key=value, got {tok!r}")
        key, val = tok.split("=", 1)
        if key in fields:
            raise StructureParseError(line_no, f"duplicate field {key!r}")
        fields[key] = val
    return fields


def _require_int(fields, key, line_no):
    if key not in fields:
        raise StructureParseError(line_no, f"missing field {key!r}")
    try:
        return int(fields[key])
    except ValueError:
        raise StructureParseError(line_no, f"field {key!r} must be an integer")


def parse_structure(text: str, height: int = None, width: int = None) -> "NetworkSpec | list":
    """Parse the line-oriented structure format.

    One layer per line, `#` starts a comment.  Returns a NetworkSpec when a
    grid size is given, otherwise the raw layer list.
    """
    layers = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        head, rest = tokens[0], tokens[1:]
        fields = _parse_fields(rest, line_no)
        try:
            if head == "gaussian_leaf":
                layers.append(GaussianLeaf(components=_require_int(fields, "k", line_no)))
            elif head == "indicator_leaf":
                layers.append(IndicatorLeaf(arity=_require_int(fields, "arity", line_no)))
            elif head == "spatial_sum":
                layers.append(SpatialSum(channels=_require_int(fields, "channels", line_no)))
            elif head == "class_sums":
                layers.append(ClassSums(classes=_require_int(fields, "k", line_no)))
            elif head == "root":
                if fields:
                    raise StructureParseError(line_no, "root takes no fields")
                layers.append(RootSum())
            elif head == "gclp":
                if "kernel" not in fields:
                    raise StructureParseError(line_no, "gclp needs kernel=KHxKW")
                kernel = _parse_pair(fields["kernel"], "kernel", line_no)
                stride = _parse_pair(fields.get("stride", "1x1"), "stride", line_no)
                dilation = _parse_pair(fields.get("dilation", "1x1"), "dilation", line_no)
                padding = fields.get("pad", "full")
                if padding not in ("full", "none"):
                    raise StructureParseError(line_no, f"pad must be full|none, got {padding!r}")
                chan = fields.get("channels", "depthwise")
                if chan == "depthwise":
                    mode = "depthwise"
                elif chan.startswith("onehot:"):
                    try:
                        mode = ("onehot", int(chan.split(":", 1)[1]))
                    except ValueError:
                        raise StructureParseError(line_no, f"bad channels spec {chan!r}")
                else:
                    raise StructureParseError(line_no, f"bad channels spec {chan!r}")
                layers.append(GCLProduct(kernel=kernel, stride=stride, dilation=dilation,
                                         padding=padding, channel_mode=mode))
            else:
                raise StructureParseError(line_no, f"unknown layer kind {head!r}")
        except StructureError as exc:
            raise StructureParseError(line_no, str(exc))
    if height is None:
        return layers
    return NetworkSpec(height=height, width=width, layers=tuple(layers), source_text=text)


def render_structure(layers) -> str:
    """Inverse of parse_structure for programmatically built stacks."""
    if isinstance(layers, NetworkSpec):
        if layers.source_text is not None:
            return layers.source_text
        layers = layers.layers
    lines = []
    for layer in layers:
        if isinstance(layer, GaussianLeaf):
            lines.append(f"gaussian_leaf k={layer.components}")
        elif isinstance(layer, IndicatorLeaf):
            lines.append(f"indicator_leaf arity={layer.arity}")
        elif isinstance(layer, SpatialSum):
            lines.append(f"spatial_sum channels={layer.channels}")
        elif isinstance(layer, ClassSums):
            lines.append(f"class_sums k={layer.classes}")
        elif isinstance(layer, RootSum):
            lines.append("root")
        elif isinstance(layer, GCLProduct):
            if layer.channel_mode == "depthwise":
                chan = "depthwise"
            else:
                chan = f"onehot:{layer.channel_mode[1]}"
            lines.append(
                "gclp kernel={}x{} stride={}x{} dilation={}x{} pad={} channels={}".format(
                    *layer.kernel, *layer.stride, *layer.dilation, layer.padding, chan))
        else:
            raise StructureError(f"cannot render {layer!r}")
    return "\n".join(lines) + "\n"
