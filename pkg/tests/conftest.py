import numpy as np
import pytest

from otvelo import GridGeometry, MassField


@pytest.fixture
def mass_field():
    """Build a unit-sum MassField from raw weights (all pixels masked ice)."""

    def build(geometry: GridGeometry, weights, floor: float = 1e-10,
              mask=None) -> MassField:
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        if mask is None:
            mask = np.ones(geometry.n, dtype=bool)
        return MassField(geometry, w / w.sum(), mask, floor)

    return build
