import numpy as np
import pytest

from cvradar.datacube import DataCube, MaterialClass
from cvradar.synth import SynthConfig, generate_dataset


def make_cube(rx=2, tx=2, n=4, label=MaterialClass.METAL, distance_mm=500,
              session_id=0, sample_id=0, seed=0):
    rng = np.random.default_rng(seed)
    iq = (rng.standard_normal((rx * tx, n)) + 1j * rng.standard_normal((rx * tx, n))).astype(np.complex64)
    return DataCube(rx_count=rx, tx_count=tx, fast_time_len=n, iq=iq, label=label,
                    distance_mm=distance_mm, session_id=session_id, sample_id=sample_id)


TINY_SYNTH = dict(rx_count=4, tx_count=4, fast_time_len=32,
                  distances_mm=(500, 700), holdout_distances_mm=(600,),
                  samples_per_class_distance=4, holdout_samples_per_class_distance=2,
                  sessions=2, seed=0)


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """A small but complete corpus: 5 classes x 2 d0 distances x 4 + d1."""
    out = tmp_path_factory.mktemp("tiny_corpus")
    manifest = generate_dataset(SynthConfig(**TINY_SYNTH), out)
    return manifest


@pytest.fixture(scope="session")
def toy_two_class(tmp_path_factory):
    """Separable-by-construction 2-class corpus: metal vs drywall, one distance."""
    from cvradar.datacube import load_cubes

    out = tmp_path_factory.mktemp("toy_two_class")
    cfg = SynthConfig(rx_count=4, tx_count=4, fast_time_len=32, distances_mm=(500,),
                      holdout_distances_mm=(600,), samples_per_class_distance=16,
                      holdout_samples_per_class_distance=2, snr_db=30.0, sessions=2, seed=0)
    manifest = generate_dataset(cfg, out)
    cubes = [c for c in load_cubes(manifest, manifest.by_split("train"))
             if c.label in (MaterialClass.METAL, MaterialClass.DRYWALL)]
    return cubes
