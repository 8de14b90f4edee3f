"""Shared test utilities: the finite-difference gradient oracle."""

import numpy as np

from aridprob import network


def fd_loss(net, x, labels):
    logits, _ = network.forward(net, x, mode="eval")
    return network.scce_loss(network.softmax(logits), labels)


def finite_difference_grads(net, x, labels, step=1e-5):
    """Central differences over every weight and bias."""
    grads = []
    for lp in net.layers:
        pair = []
        for arr in (lp.weights, lp.biases):
            g = np.zeros_like(arr)
            flat = arr.reshape(-1)
            gf = g.reshape(-1)
            for i in range(flat.size):
                keep = flat[i]
                flat[i] = keep + step
                up = fd_loss(net, x, labels)
                flat[i] = keep - step
                down = fd_loss(net, x, labels)
                flat[i] = keep
                gf[i] = (up - down) / (2.0 * step)
            pair.append(g)
        grads.append(tuple(pair))
    return grads


def random_gradient_case(rng, max_width=8, max_layers=4, batch=8,
                         kink_margin=1e-3):
    """A random small dropout-free network and batch, away from ReLU kinks.

    Cases where any hidden pre-activation sits within ``kink_margin`` of
    zero are redrawn: central differences are invalid across the kink.
    """
    while True:
        n_layers = int(rng.integers(2, max_layers + 1))
        widths = [int(rng.integers(2, max_width + 1)) for _ in range(n_layers - 1)]
        widths.append(3)
        cfg = network.NetworkConfig(
            layer_widths=tuple(widths), dropout_rate=0.0,
            seed=int(rng.integers(1 << 31)),
        )
        net = network.init(cfg)
        x = rng.normal(0.0, 1.0, (batch, widths[0]))
        labels = rng.integers(1, 4, batch)
        _, cache = network.forward(net, x, mode="train")
        hidden_zs = cache["zs"][:-1]
        if hidden_zs and min(np.abs(z).min() for z in hidden_zs) < kink_margin:
            continue
        return net, x, labels, cache


def max_relative_gradient_error(net, x, labels, cache, step=1e-5):
    analytic = network.backward(net, cache, labels)
    numeric = finite_difference_grads(net, x, labels, step=step)
    worst = 0.0
    for (aw, ab), (nw, nb) in zip(analytic, numeric):
        for a, n in ((aw, nw), (ab, nb)):
            denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
            worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst
