import os

import hypothesis
import pytest

from cloudmanet.devices import Device, PowerState
from cloudmanet.geometry import CellGrid, Position
from cloudmanet.world import World

hypothesis.settings.register_profile("ci", max_examples=200, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=20, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))

REPO = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIGS = os.path.join(REPO, "configs")


def make_world(points, radio_range=10.0, grid=None, uplinks=(), states=None, **kw):
    """World with device ids 1..n at ``points`` (x, y pairs)."""
    grid = grid or CellGrid(Position(0, 0), 10.0, 10, 10)
    w = World(grid, **kw)
    for k, (x, y) in enumerate(points, start=1):
        w.add(
            Device(
                id=k,
                pos=Position(x, y),
                radio_range=radio_range,
                state=(states or {}).get(k, PowerState.ACTIVE),
                has_uplink=k in uplinks,
                hw_key=f"hw-{k}",
            )
        )
    return w


@pytest.fixture
def lattice5():
    """5x5 device lattice, spacing 10 m, range 10 m: links only to the 4 grid neighbours."""
    pts = [(5 + 10 * c, 5 + 10 * r) for r in range(5) for c in range(5)]
    return make_world(pts, radio_range=10.0)
