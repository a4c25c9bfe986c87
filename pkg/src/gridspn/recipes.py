"""Canned valid architectures.

The generative recipe alternates full-padding product layers (kernel 2,
dilations doubling from 1) with per-cell sum layers until the receptive
field covers the grid, then closes with a spanning no-padding product layer
whose dilation equals the receptive field; every cell of the closing layer
covers the full variable set, so the root (or the class sums) is complete
over all of them."""

from .structure import (ClassSums, GaussianLeaf, GCLProduct, NetworkSpec,
                        RootSum, SpatialSum)

__all__ = [
    "doubling_dilations",
    "closing_layer",
    "generative_network",
    "discriminative_network",
]


def doubling_dilations(extent: int):
    """Dilations 1, 2, 4, ... until a kernel-2 stack covers `extent` cells."""
    dilations = []
    d = 1
    while d < extent:  # receptive field after the stack is 2 * last dilation
        dilations.append(d)
        d *= 2
    return dilations


def closing_layer(grid_hw, reach_hw, channel_mode="depthwise") -> GCLProduct:
    """Spanning product layer: dilation = receptive-field spacing per axis,
    kernel size ceil(grid / dilation), no padding.  Cells at that spacing
    have disjoint scopes whose union covers everything, so every output cell
    ends up with the full scope."""
    gh, gw = grid_hw
    rh, rw = reach_hw
    kh = max(1, -(-gh // rh))
    kw = max(1, -(-gw // rw))
    return GCLProduct(kernel=(kh, kw), stride=(1, 1), dilation=(rh, rw),
                      padding="none", channel_mode=channel_mode)


def _stack_geometry(h, w):
    """Dilation schedule and post-stack geometry for a kernel-2 doubling
    stack with full padding on an h x w grid."""
    extent = max(h, w)
    dilations = doubling_dilations(extent)
    reach = 2 * dilations[-1] if dilations else 1
    gh, gw = h, w
    for d in dilations:
        gh, gw = gh + d, gw + d
    return dilations, reach, (gh, gw)


def generative_network(h: int, w: int, leaf_components: int = 4,
                       sum_channels: int = 16,
                       first_products: int = None) -> NetworkSpec:
    """Gaussian leaves, a first product layer enumerating channel
    combinations, then alternating depthwise products (doubling dilations)
    and sum layers, a spanning closing product and the root."""
    if first_products is None:
        first_products = leaf_components ** 4
    layers = [GaussianLeaf(components=leaf_components)]
    dilations, reach, grid = _stack_geometry(h, w)
    if not dilations:  # degenerate 1x1 grid
        layers.append(RootSum())
        return NetworkSpec(height=h, width=w, layers=tuple(layers))
    for i, d in enumerate(dilations):
        mode = ("onehot", first_products) if i == 0 else "depthwise"
        layers.append(GCLProduct(kernel=(2, 2), dilation=(d, d),
                                 padding="full", channel_mode=mode))
        layers.append(SpatialSum(channels=sum_channels))
    layers.append(closing_layer(grid, (reach, reach)))
    layers.append(RootSum())
    return NetworkSpec(height=h, width=w, layers=tuple(layers))


def discriminative_network(h: int, w: int, classes: int,
                           leaf_components: int = 32,
                           sum_channels=(16, 32)) -> NetworkSpec:
    """Two non-overlapping stride-2 product layers first, then the
    overlapping doubling-dilation stack, class sums and the root.

    Products are depthwise throughout; the sum layers in between mix
    channels.  sum_channels is (early, late): the first three sum layers
    use the early width, later ones the late width.
    """
    if h % 4 or w % 4:
        raise ValueError(f"grid {h}x{w} must be divisible by 4 "
                         "(two stride-2 halvings)")
    layers = [GaussianLeaf(components=leaf_components)]
    early, late = sum_channels
    n_sums = 0

    def sum_layer():
        nonlocal n_sums
        n_sums += 1
        return SpatialSum(channels=early if n_sums <= 3 else late)

    layers.append(GCLProduct(kernel=(2, 2), stride=(2, 2), padding="none",
                             channel_mode="depthwise"))
    layers.append(sum_layer())
    layers.append(GCLProduct(kernel=(2, 2), stride=(2, 2), padding="none",
                             channel_mode="depthwise"))
    layers.append(sum_layer())

    gh, gw = h // 4, w // 4
    dilations, reach, grid = _stack_geometry(gh, gw)
    for d in dilations:
        layers.append(GCLProduct(kernel=(2, 2), dilation=(d, d),
                                 padding="full", channel_mode="depthwise"))
        layers.append(sum_layer())
    if dilations:
        layers.append(closing_layer(grid, (reach, reach)))
    layers.append(ClassSums(classes=classes))
    layers.append(RootSum())
    return NetworkSpec(height=h, width=w, layers=tuple(layers))
