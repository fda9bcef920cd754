import numpy as np
import pytest

from antispoof.tensor import Tensor


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def numeric_grad(f, x: np.ndarray, h: float = 1e-2) -> np.ndarray:
    """Central-difference gradient of scalar f() w.r.t. the buffer x.

    f reads x from its closure; x is perturbed in place.  h is sized for
    float32 arithmetic: big enough to clear roundoff, small enough that
    curvature error stays below the comparison tolerance.
    """
    g = np.zeros(x.size, dtype=np.float64)
    flat = x.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f())
        flat[i] = orig - h
        fm = float(f())
        flat[i] = orig
        g[i] = (fp - fm) / (2.0 * h)
    return g.reshape(x.shape).astype(np.float32)


def assert_grads_close(build, leaves: list[Tensor], rtol: float = 1e-2, atol: float = 2e-3):
    """Compare reverse-mode grads of build() against finite differences."""
    for leaf in leaves:
        leaf.grad = None
    out = build()
    out.backward()
    for i, leaf in enumerate(leaves):
        expected = numeric_grad(lambda: build().data, leaf.data)
        assert leaf.grad is not None, f"leaf {i} got no gradient"
        np.testing.assert_allclose(
            leaf.grad, expected, rtol=rtol, atol=atol, err_msg=f"leaf {i} gradient mismatch"
        )
