import numpy as np
import pytest

from cflvq.model import make_model


def random_model(rng, metric="identity", classes=2, dim=2, per_class=1, spread=3.0):
    """Prototypes scattered in a cube; metrics are random well-conditioned omegas."""
    W = rng.uniform(-spread, spread, size=(classes * per_class, dim))
    labels = np.repeat(np.arange(classes), per_class)

    def omega():
        return np.eye(dim) + 0.4 * rng.normal(size=(dim, dim))

    if metric == "global":
        return make_model(W, labels, metric="global", omega=omega())
    if metric == "local":
        return make_model(W, labels, metric="local", omegas=[omega() for _ in W])
    return make_model(W, labels)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def demo_model():
    return make_model([[0.0, 0.0], [2.0, 0.0]], [0, 1])


# one line per acceptance criterion, printed after the run so it survives output capture
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
