"""Random valid network generator for oracle-equivalence testing."""

import numpy as np

from gridspn.graph import compile_network
from gridspn.params import init_em_params
from gridspn.recipes import closing_layer, doubling_dilations
from gridspn.structure import (GCLProduct, IndicatorLeaf, NetworkSpec,
                               RootSum, SpatialSum)

SHAPES = [(1, 1), (1, 2), (1, 3), (2, 2), (1, 4), (1, 6), (2, 3), (1, 8),
          (2, 4), (3, 3), (1, 9), (1, 12), (2, 6), (3, 4), (2, 5), (1, 10)]


def _factorize(n, rng):
    """Random ordered factorization into factors >= 2 (empty for n=1)."""
    factors = []
    rest = n
    while rest > 1:
        options = [f for f in (2, 3, 4) if rest % f == 0]
        if not options:
            factors.append(rest)
            break
        f = int(rng.choice(options + [rest] if rest <= 4 else options))
        factors.append(f)
        rest //= f
    return factors


def _maybe_sum(layers, rng):
    if rng.random() < 0.6:
        layers.append(SpatialSum(channels=int(rng.integers(2, 5))))


def _channel_mode(rng, c_in, t):
    if rng.random() < 0.5:
        return "depthwise"
    n_max = min(c_in ** t, 8)
    return ("onehot", int(rng.integers(1, n_max + 1)))


def _reduction_stack(h, w, rng, c_in):
    """No-padding exact-reduction stack (product dilation schedule)."""
    fh, fw = _factorize(h, rng), _factorize(w, rng)
    depth = max(len(fh), len(fw))
    fh += [1] * (depth - len(fh))
    fw += [1] * (depth - len(fw))
    layers = []
    dh, dw = 1, 1
    for i in range(depth):
        kh, kw = fh[i], fw[i]
        t = kh * kw
        mode = _channel_mode(rng, c_in, t)
        layers.append(GCLProduct(kernel=(kh, kw), dilation=(dh, dw),
                                 padding="none", channel_mode=mode))
        c_in = c_in if mode == "depthwise" else mode[1]
        dh *= kh
        dw *= kw
        _maybe_sum(layers, rng)
        if layers[-1].kind == "spatial_sum":
            c_in = layers[-1].channels
    return layers


def _padded_stack(h, w, rng, c_in):
    """Full-padding doubling stack plus the spanning closing layer."""
    extent = max(h, w)
    dilations = doubling_dilations(extent)
    layers = []
    gh, gw = h, w
    for i, d in enumerate(dilations):
        kh = 2 if h > 1 else 1
        kw = 2 if w > 1 else 1
        t = kh * kw
        mode = _channel_mode(rng, c_in, t)
        layers.append(GCLProduct(kernel=(kh, kw), dilation=(d, d), padding="full",
                                 channel_mode=mode))
        c_in = c_in if mode == "depthwise" else mode[1]
        gh += (kh - 1) * d
        gw += (kw - 1) * d
        _maybe_sum(layers, rng)
        if layers[-1].kind == "spatial_sum":
            c_in = layers[-1].channels
    if dilations:
        reach = 2 * dilations[-1]
        layers.append(closing_layer((gh, gw), (reach if h > 1 else 1,
                                                reach if w > 1 else 1)))
    return layers


def random_valid_spec(rng, max_vars=12, arity=2) -> NetworkSpec:
    shapes = [s for s in SHAPES if s[0] * s[1] <= max_vars]
    h, w = shapes[rng.integers(len(shapes))]
    c_in = arity
    layers = [IndicatorLeaf(arity=arity)]
    if rng.random() < 0.3:
        layers.append(SpatialSum(channels=int(rng.integers(2, 4))))
        c_in = layers[-1].channels
    if h == w == 1:
        stack = []
    elif rng.random() < 0.5:
        stack = _reduction_stack(h, w, rng, c_in)
    else:
        stack = _padded_stack(h, w, rng, c_in)
    layers.extend(stack)
    layers.append(RootSum())
    return NetworkSpec(height=h, width=w, layers=tuple(layers))


def randomize_params(plan, rng, normalized: bool):
    """Random sum parameters; unnormalized weights exercise the general
    (non-probability) semiring semantics."""
    params = init_em_params(plan)
    for s in params.sums:
        if normalized:
            s.accumulators = rng.gamma(2.0, size=s.accumulators.shape)
            s.refresh()
        else:
            s.log_weights = np.log(rng.uniform(0.2, 2.5, size=s.accumulators.shape))
    return params


def random_network(rng, max_vars=12, normalized=False):
    """(spec, plan, params) triple.  Both generator families are valid by
    construction, so compile failures indicate a generator bug."""
    for _ in range(5):
        spec = random_valid_spec(rng, max_vars=max_vars)
        try:
            plan = compile_network(spec)
        except ValueError as exc:
            last = exc
            continue
        return spec, plan, randomize_params(plan, rng, normalized)
    raise AssertionError(f"random generator produced invalid networks: {last}")
