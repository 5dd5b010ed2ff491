from harvestsim.engine import Scenario
from harvestsim.icu import IcuConfig
from harvestsim.source import SourceModel
from harvestsim.storage import ArrayConfig, StorageCap


def harvest_scenario(currents, duration, *, combiner=None, target=("C2", 33e-3), **kw) -> Scenario:
    """Sources only, no load, one storage capacitor on the combiner."""
    srcs = tuple(SourceModel.constant(f"s{k}", i) for k, i in enumerate(currents))
    caps = (StorageCap("C1", 15e-3, 3.0, "to-supply"), StorageCap(target[0], target[1], 0.0, "to-combiner"))
    extra = {"combiner": combiner} if combiner is not None else {}
    return Scenario(sources=srcs, storage=ArrayConfig(caps=caps), icu=IcuConfig(enabled=False),
                    duration=duration, **extra, **kw)
