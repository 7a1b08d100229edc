import numpy as np
import pytest

from dpfnet.tensor import Tensor


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def leaf(arr, dtype=np.float64):
    return Tensor(np.array(arr, dtype=dtype), requires_grad=True)


def conv2d_reference(x, k, b=None, dilation=1):
    """Six nested loops; zero 'same' padding, cross-correlation orientation."""
    n, c, h, w = x.shape
    o, _, kh, kw = k.shape
    ph, pw = dilation * (kh - 1) // 2, dilation * (kw - 1) // 2
    out = np.zeros((n, o, h, w))
    for bi in range(n):
        for oc in range(o):
            for i in range(h):
                for j in range(w):
                    acc = 0.0 if b is None else float(b[oc])
                    for ic in range(c):
                        for u in range(kh):
                            for v in range(kw):
                                yi, xj = i + u * dilation - ph, j + v * dilation - pw
                                if 0 <= yi < h and 0 <= xj < w:
                                    acc += x[bi, ic, yi, xj] * k[oc, ic, u, v]
                    out[bi, oc, i, j] = acc
    return out


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
