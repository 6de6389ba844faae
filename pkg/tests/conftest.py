import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from xmc.dataspace import FeatureSet, Modality, SynthConfig, l2_normalize  # noqa: E402

# standard-size benchmark with no intra-identity spread and no fragmentation;
# a mild modality offset remains so training has a gap to close
ZERO_NOISE = SynthConfig(intra_identity_spread=0.0, modality_offset_scale=1.0,
                         fragmentation_rate=0.0)


def random_unit(rng, n, d):
    return l2_normalize(rng.standard_normal((n, d)))


def make_set(features, modality=Modality.VISIBLE, truth=None, ids=None):
    features = np.asarray(features, dtype=float)
    ids = np.arange(len(features)) if ids is None else ids
    return FeatureSet(modality, features, ids, truth)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    rows = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance.py" in getattr(rep, "nodeid", "") and rep.when == "call":
                rows.append((rep.nodeid.split("::")[-1], outcome))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in sorted(rows):
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")
