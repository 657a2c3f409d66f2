import logging
import random
from pathlib import Path

import pytest

from fragserve import (
    BandwidthTrace,
    ClientSpec,
    DeviceProfile,
    LayerSpec,
    ModelSpec,
    SyntheticCostModel,
)

logging.getLogger("fragserve").setLevel(logging.ERROR)

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def make_model(model_id="m", n_layers=8, seed=0, input_bytes=2000):
    rng = random.Random(seed)
    layers = tuple(
        LayerSpec(round(0.5 + rng.random(), 4), rng.randrange(500, 9000))
        for _ in range(n_layers)
    )
    return ModelSpec(model_id, input_bytes, layers)


def make_cost(models, c0=1.0, c1=0.25, kappa=0.9, batch_max=16):
    if isinstance(models, ModelSpec):
        models = {models.model_id: models}
    return SyntheticCostModel(models, c0=c0, c1=c1, kappa=kappa, batch_max=batch_max)


def make_device(models, base=8.0, step=0.9, device_id="dev"):
    if isinstance(models, ModelSpec):
        models = [models]
    table = {}
    for spec in models:
        cum = [0.0]
        for i in range(spec.layer_count):
            cum.append(cum[-1] + base + step * i)
        table[spec.model_id] = tuple(cum)
    return DeviceProfile(device_id, table)


def make_client(client_id, model, device, rate=10.0, slo=60.0, mbps=40.0):
    trace = BandwidthTrace((0.0,), (float(mbps),))
    return ClientSpec(client_id, device, model, rate, slo, trace)


@pytest.fixture
def trunk8():
    """The shared-suffix fixture model, rebuilt in code."""
    payloads = [4000, 1500, 6000, 5000, 800, 7000, 3000, 2000]
    layers = tuple(LayerSpec(1.0 + 0.3 * i, pb) for i, pb in enumerate(payloads))
    return ModelSpec("trunk8", 2000, layers)
