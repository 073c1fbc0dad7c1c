import pytest

from dialref import synthetic


@pytest.fixture(scope="session")
def figure_corpus():
    return synthetic.figure_fixture_corpus()


@pytest.fixture(scope="session")
def reduction_corpus():
    return synthetic.reduction_fixture_corpus()


@pytest.fixture(scope="session")
def agos2():
    """Two image sets, 60 mentions; enough for end-to-end runs."""
    return synthetic.agos_like_corpus(n_sets=2)


@pytest.fixture(scope="session")
def agos5():
    """Full-shape stand-in: 5 sets, 15 dialogues, 150 mentions."""
    return synthetic.agos_like_corpus()
