import pytest

from vecgp.tensor import set_num_threads


@pytest.fixture(autouse=True)
def _single_thread():
    """Keep the kernel worker pool serial unless a test opts in."""
    set_num_threads(1)
    yield
    set_num_threads(1)
