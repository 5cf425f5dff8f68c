import pytest

from tailar import backend


@pytest.fixture(params=backend.available_backends())
def kernel_backend(request):
    """Run the test once per available kernel backend."""
    with backend.use_backend(request.param):
        yield request.param
