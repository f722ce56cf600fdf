import numpy as np
import pytest

from treemkl.dataio import StreamFeatureSequence
from treemkl.hierarchy import Hierarchy, pool_sequence


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def random_sequence(rng, video_id="v0", frames=16, dim=3, stream="appearance"):
    return StreamFeatureSequence(
        video_id=video_id, stream=stream,
        rows=rng.standard_normal((frames, dim)))


def random_trees(rng, n=6, depth=2, frames=16, dim=3):
    h = Hierarchy(depth)
    return [pool_sequence(random_sequence(rng, video_id=f"v{i}",
                                          frames=frames, dim=dim), h)
            for i in range(n)]
