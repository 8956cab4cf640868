from pathlib import Path

import pytest

from spudd import _pykernel
from spudd.add import DiagramStore, compiled_kernel_available

FIXTURES = Path(__file__).parent / "fixtures"


def kernel_classes():
    kernels = [pytest.param(_pykernel.Kernel, id="python")]
    if compiled_kernel_available():
        from spudd import _kernel

        kernels.append(pytest.param(_kernel.Kernel, id="compiled"))
    return kernels


@pytest.fixture(scope="session", params=kernel_classes())
def kernel(request):
    """Node kernel class; every test using it runs once per available kernel."""
    return request.param


@pytest.fixture
def store(kernel):
    return DiagramStore(kernel=kernel)


@pytest.fixture
def fixtures_dir():
    return FIXTURES
