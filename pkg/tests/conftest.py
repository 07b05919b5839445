import numpy as np
import pytest

from calderon_eit import fem


@pytest.fixture(scope="session")
def layout32():
    return fem.ElectrodeLayout()


@pytest.fixture(scope="session")
def mesh32(layout32):
    return fem.build_disk_mesh(0.05, layout32)


@pytest.fixture(scope="session")
def patterns32():
    return fem.trig_current_patterns(32, 0.0033)


@pytest.fixture(scope="session")
def hom_frame(mesh32, patterns32):
    """Noise-free frame for gamma identically 1."""
    return fem.simulate_measurements(mesh32, fem.uniform_field(mesh32, 1.0),
                                     patterns32)


@pytest.fixture(scope="session")
def bump_frame(mesh32, patterns32):
    """Noise-free frame for a centered disc inclusion, contrast +0.2."""
    from calderon_eit import phantoms as ph
    inclusion = ph.Phantom(
        background=1.0,
        organs=(ph.OrganBoundary("disc", ph.disc_polygon((0.0, 0.0), 0.2, 64),
                                 1.2),),
        case="A")
    field = ph.phantom_to_field(inclusion, mesh32)
    return fem.simulate_measurements(mesh32, field, patterns32)
