"""Finite-difference gradient checking helpers used across the test suite."""

import numpy as np

DEFAULT_H = 1e-6


def numeric_grad(f, x, h=DEFAULT_H):
    """Central-difference gradient of scalar f at array x (x is not modified)."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        up = f(x)
        flat[i] = keep - h
        down = f(x)
        flat[i] = keep
        gf[i] = (up - down) / (2.0 * h)
    return g


def check_layer(layer, x, rng, rtol=1e-5, atol=1e-7, h=DEFAULT_H):
    """Compare layer.backward against finite differences of phi = sum(dy * y).

    Checks the input gradient and every parameter gradient. The layer must be
    built in float64 for the comparison to be meaningful.
    """
    x = np.asarray(x, dtype=np.float64)
    y = layer.forward(x, cache=True)
    dy = rng.standard_normal(y.shape)

    for p in layer.params():
        p.grad[...] = 0.0
    dx = layer.backward(dy)

    def phi_of_x(xv):
        return float(np.sum(dy * layer.forward(xv, cache=False)))

    np.testing.assert_allclose(dx, numeric_grad(phi_of_x, x, h),
                               rtol=rtol, atol=atol, err_msg="input gradient")

    for p in layer.params():
        def phi_of_p(pv, p=p):
            keep = p.value
            p.value = pv
            try:
                return float(np.sum(dy * layer.forward(x, cache=False)))
            finally:
                p.value = keep

        np.testing.assert_allclose(p.grad, numeric_grad(phi_of_p, p.value.copy(), h),
                                   rtol=rtol, atol=atol, err_msg=p.name)
