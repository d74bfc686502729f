import numpy as np
import pytest
from hypothesis import settings

from sane.graph import from_edges, make_splits, planted_split

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def random_graph(n=12, p=0.3, feat_dim=5, num_classes=3, seed=0, multi=False):
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p
    edges = np.stack([iu[keep], ju[keep]], axis=1)
    features = rng.normal(size=(n, feat_dim))
    if multi:
        labels = (rng.random((n, num_classes)) < 0.4).astype(np.int64)
    else:
        labels = rng.integers(num_classes, size=n)
    g = from_edges(n, edges, features, labels, num_classes, multi)
    return make_splits(g, seed=seed)


@pytest.fixture
def small_graph():
    return random_graph()


@pytest.fixture(scope="session")
def planted():
    return planted_split(seed=0)


_ACCEPTANCE: list[str] = []


@pytest.fixture
def acceptance():
    """Record one verdict line per acceptance criterion; echoed in the terminal summary."""

    def record(number, title, ok, detail=""):
        verdict = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        line = f"criterion {number} {verdict}  {title}" + (f"  [{detail}]" if detail else "")
        print(line)
        _ACCEPTANCE.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
