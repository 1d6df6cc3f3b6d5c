import pytest

from genrekit.pipeline import SynthSpec, synth_dataset


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """A 40-album synthetic dataset shared by the experiment tests."""
    root = tmp_path_factory.mktemp("small_ds")
    spec = SynthSpec(n_top_genres=2, subs_per_genre=3, albums=40,
                     tracks_per_album=2, seed=11, min_frames=40, max_frames=60,
                     image_dim=16)
    manifest, tax = synth_dataset(spec, root)
    return manifest, tax
