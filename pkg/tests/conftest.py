import random

import pytest

from cloudpeer.overlay import Overlay, OverlayConfig
from cloudpeer.simnet import LatencyModel, Network, Simulator


def make_overlay(n: int, seed: int = 1, cfg: OverlayConfig = OverlayConfig()) -> Overlay:
    net = Network(Simulator(), LatencyModel(seed=seed), buffer_cap=cfg.message_buffer_cap)
    ov = Overlay(cfg, net, seed=seed)
    ov.build(f"peer-{seed}-{i}" for i in range(n))
    return ov


def random_keys(count: int, seed: int, cfg: OverlayConfig = OverlayConfig()) -> list[int]:
    rng = random.Random(seed)
    return [rng.randrange(cfg.space) for _ in range(count)]


@pytest.fixture
def overlay16():
    return make_overlay(16)
