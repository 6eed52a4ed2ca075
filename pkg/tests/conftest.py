import json
import sys
from pathlib import Path

import numpy as np
import pytest

from graphground.scene import load_scene
from graphground.vocabulary import default_vocabulary, load_vocabulary, read_embedding_file

DATA = Path(__file__).parent / "data"


def obj(oid, center, extents=(0.5, 0.5, 0.5), cats=None, rgb=(0.5, 0.5, 0.5), yaw=0.0, **extra):
    d = {
        "id": oid,
        "center": list(center),
        "extents": list(extents),
        "yaw": yaw,
        "mean_rgb": list(rgb),
        "category_dist": cats or {"chair": 1.0},
    }
    d.update(extra)
    return d


def make_scene(*objects, sid="s"):
    return load_scene({"id": sid, "objects": list(objects)})


@pytest.fixture(scope="session")
def vocab():
    return default_vocabulary()


@pytest.fixture(scope="session")
def mini_vocab():
    manifest = json.loads((DATA / "mini_manifest.json").read_text())
    return load_vocabulary(manifest, read_embedding_file(DATA / "mini_glove.txt"))


@pytest.fixture
def couch_bag():
    # bag resting on the couch seat, one-hot categories
    return make_scene(
        obj("couch1", (0, 0, 0.4), (2.0, 0.9, 0.8), {"couch": 1.0}, (0.545, 0.271, 0.075), gt_category="couch"),
        obj("bag1", (0.3, 0.1, 0.975), (0.4, 0.2, 0.35), {"bag": 1.0}, (0.0, 0.0, 0.0), gt_category="bag"),
        sid="couch_bag",
    )


def one_hot(n, i):
    v = np.zeros(n)
    v[i] = 1.0
    return v


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
