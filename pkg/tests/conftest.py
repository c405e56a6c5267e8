import numpy as np
import pytest

from manifool.groups import GroupKind, make_basis


def smooth_random_image(rng, size=32, channels=1, sigma=2.0):
    """Random image with content varying over a few pixels.

    Bilinear resampling is only first-order accurate, so derivative and
    refinement checks need images whose features are wider than one pixel;
    low-pass filtered noise provides that while staying random.
    """
    from scipy.ndimage import gaussian_filter

    noise = rng.random((size, size, channels))
    img = np.stack(
        [gaussian_filter(noise[:, :, c], sigma=sigma, mode="nearest") for c in range(channels)],
        axis=2,
    )
    img -= img.min()
    peak = img.max()
    if peak > 0:
        img /= peak
    return img


@pytest.fixture(scope="session")
def affine_basis_32():
    return make_basis(GroupKind.AFFINE, (32, 32))


@pytest.fixture(scope="session")
def all_bases_32():
    return {kind: make_basis(kind, (32, 32)) for kind in GroupKind}
