import functools
import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(autouse=True)
def _quiet_jax():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", category=UserWarning, module="jax")
        yield


@functools.lru_cache(maxsize=None)
def cached_rig(seed: int = 1, noise: float = 0.0, n_frames: int = 200, n_cameras: int = 3):
    from posecalib.synthetic import RigConfig, generate_rig

    return generate_rig(RigConfig(seed=seed, detection_noise=noise, n_frames=n_frames, n_cameras=n_cameras, max_delta_t=40))


def random_rotation(rng) -> np.ndarray:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )
