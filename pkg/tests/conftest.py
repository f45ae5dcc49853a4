"""Shared fixtures and independent oracles used to cross-check the engine."""

import itertools
from collections import deque

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lce.masks import BinaryMask, Image

settings.register_profile(
    "suite",
    max_examples=50,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


# -- independent oracles ------------------------------------------------------


def permutation_shapley(values: np.ndarray) -> np.ndarray:
    """Brute-force Shapley: average marginal contribution over all n!
    player orderings. Deliberately independent of the engine's
    coalition-weight formula."""
    values = np.asarray(values, dtype=np.float64)
    n = values.size.bit_length() - 1
    assert values.size == 1 << n
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    phis = np.zeros(n, dtype=np.float64)
    prev = np.zeros(len(perms), dtype=np.int64)
    for j in range(n):
        players = perms[:, j]
        current = prev | (1 << players)
        np.add.at(phis, players, values[current] - values[prev])
        prev = current
    return phis / len(perms)


def flood_fill_component(dark: np.ndarray, x: int, y: int) -> np.ndarray:
    """BFS 4-connected component of dark pixels containing (x, y); an
    all-false map when the start pixel is not dark."""
    h, w = dark.shape
    out = np.zeros_like(dark, dtype=bool)
    if not dark[y, x]:
        return out
    queue = deque([(y, x)])
    out[y, x] = True
    while queue:
        cy, cx = queue.popleft()
        for ny, nx in ((cy - 1, cx), (cy + 1, cx), (cy, cx - 1), (cy, cx + 1)):
            if 0 <= ny < h and 0 <= nx < w and dark[ny, nx] and not out[ny, nx]:
                out[ny, nx] = True
                queue.append((ny, nx))
    return out


def iou(a: BinaryMask, b: BinaryMask) -> float:
    inter = np.count_nonzero(a.bits & b.bits)
    union_ = np.count_nonzero(a.bits | b.bits)
    return inter / union_ if union_ else 0.0


# -- stub endpoints -----------------------------------------------------------


class StubModel:
    """Model endpoint returning a fixed probability vector for every image."""

    capabilities = ("predict",)
    max_batch = 64

    def __init__(self, probabilities=(0.0, 1.0)):
        self.probabilities = [float(p) for p in probabilities]
        self.calls = 0

    def predict(self, images):
        self.calls += 1
        return [list(self.probabilities) for _ in images]


class PixelProbeModel:
    """Maps composites back to coalition bitmasks by probing marker pixels.

    Concepts are expected to be single-pixel masks whose original value is
    1.0 while the fill is 0.0 there, so membership of concept i in the kept
    coalition is readable from pixel ``positions[i]``. The utility table is
    indexed by the recovered bitmask; class 1 carries the utility.
    """

    capabilities = ("predict",)
    max_batch = 64

    def __init__(self, positions, table):
        self.positions = list(positions)
        self.table = np.asarray(table, dtype=np.float64)
        assert self.table.size == 1 << len(self.positions)

    def predict(self, images):
        out = []
        for image in images:
            members = 0
            for i, (x, y) in enumerate(self.positions):
                if image.data[y, x, 0] > 0.5:
                    members |= 1 << i
            u = float(self.table[members])
            out.append([1.0 - u, u])
        return out


def probe_setup(table, width=8, height=8):
    """Image/concepts/fill triple for PixelProbeModel with n marker pixels."""
    from lce.discovery import ConceptMask, ConceptSet

    n = int(np.asarray(table).size).bit_length() - 1
    positions = [(1 + 2 * i, 1) for i in range(n)]
    assert positions[-1][0] < width
    data = np.zeros((height, width, 1), dtype=np.float32)
    for x, y in positions:
        data[y, x, 0] = 1.0
    image = Image(data)
    fill = Image(np.zeros((height, width, 1), dtype=np.float32))
    concepts = []
    for i, (x, y) in enumerate(positions):
        bits = np.zeros((height, width), dtype=bool)
        bits[y, x] = True
        concepts.append(ConceptMask(f"c{i:02d}-point", BinaryMask(bits), "heatmap-point", (x, y)))
    model = PixelProbeModel(positions, table)
    return image, ConceptSet(concepts), fill, model


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
