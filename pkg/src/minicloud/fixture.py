"""Read access to the committed calibration fixture.

The fixture is the single source for provider timing profiles, strategy
parameters, and workload constants. It is produced by the calibration
oracle (see calibration.py) and committed under data/; everything here is
read-only.
"""

import json
from functools import lru_cache
from importlib import resources

from .errors import ValidationError

FIXTURE_RESOURCE = "calibration.json"


def fixture_bytes() -> bytes:
    return resources.files("minicloud.data").joinpath(FIXTURE_RESOURCE).read_bytes()


@lru_cache(maxsize=1)
def load() -> dict:
    """Parsed fixture. Callers must treat the returned mapping as frozen."""
    return json.loads(fixture_bytes().decode("utf-8"))


def provider_names() -> tuple[str, ...]:
    return tuple(sorted(load()["providers"]))


def provider_entry(name: str) -> dict:
    providers = load()["providers"]
    if name not in providers:
        known = ", ".join(sorted(providers))
        raise ValidationError(f"unknown provider profile {name!r} (known: {known})")
    return providers[name]


def strategy_entry(provider: str, kind: str) -> dict:
    provider_entry(provider)
    strategies = load()["strategies"][provider]
    if kind not in strategies:
        known = ", ".join(sorted(strategies))
        raise ValidationError(f"unknown strategy {kind!r} (known: {known})")
    return strategies[kind]


def workloads_entry() -> dict:
    return load()["workloads"]
