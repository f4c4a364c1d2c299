import numpy as np
import pytest

from msmkit import ImageGrid, PhantomSpec, generate_phantom


@pytest.fixture
def phantom64():
    return generate_phantom(PhantomSpec(seed=1, size=64))


@pytest.fixture
def flat(request):
    def make(value=0.5, shape=(32, 32)):
        return ImageGrid(np.full(shape, value, dtype=np.float64))
    return make
