import numpy as np
import pytest

from styletx.guides import GuideKind, GuideSide, assemble_guide_set
from styletx.raster import RasterImage
from styletx.synthetic import exemplar_images, value_noise


@pytest.fixture(scope="session")
def ex64():
    return exemplar_images(64)


@pytest.fixture(scope="session")
def ex128():
    return exemplar_images(128)


def build_guides(images: dict, side: GuideSide, selection) -> "GuideSet":
    channels = [(GuideKind(kind), RasterImage(images[kind]), weight) for kind, weight in selection]
    return assemble_guide_set(channels, side)


BASE_SELECTION = (("diffuse", 1.0), ("normal", 1.0), ("coverage", 0.5))
STRONG_SELECTION = (("diffuse", 8.0), ("normal", 8.0), ("coverage", 4.0))


@pytest.fixture()
def guides_of():
    return build_guides


@pytest.fixture(scope="session")
def unique_world():
    """Full-coverage world-position field with a unique value per pixel."""

    def make(size: int = 64, seed: int = 5) -> np.ndarray:
        ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
        wp = np.stack(
            [
                xs / (size - 1),
                ys / (size - 1),
                0.25 + 0.5 * value_noise(size, size, size / 5.0, seed),
            ],
            axis=2,
        )
        return np.ascontiguousarray(wp, dtype=np.float32)

    return make
