import numpy as np
import pytest

from skewreserve import load_chan2008, log_transform, parse_triangle


@pytest.fixture(scope="session")
def chan():
    return load_chan2008()


@pytest.fixture()
def rng():
    return np.random.default_rng(20240810)


@pytest.fixture()
def tiny_triangle():
    text = "accident_year,dev_year,amount\n1,1,100\n1,2,50\n2,1,200\n"
    return parse_triangle(text)


@pytest.fixture()
def small_logtri():
    rows = []
    rng = np.random.default_rng(5)
    n = 4
    for i in range(1, n + 1):
        for j in range(1, n - i + 2):
            rows.append(f"{2000 + i},{j},{float(np.exp(8 + 0.3 * rng.standard_normal())):.6f}")
    text = "accident_year,dev_year,amount\n" + "\n".join(rows) + "\n"
    return log_transform(parse_triangle(text))
