"""Numerical control synthesis for the Kawahara equation with an integral observation."""

from importlib import resources

__version__ = "0.1.0"


def fixture_path(name):
    """Path of a shipped example problem (e.g. 'canonical')."""
    return resources.files("kawactl") / "fixtures" / f"{name}.json"
