"""Fixed-wing UAV airspeed from propeller power and rotational speed."""

from importlib import resources

__version__ = "0.1.0"


def sample_geometry_path():
    return resources.files(__package__) / "data" / "sample_prop.txt"


def sample_polar_path():
    return resources.files(__package__) / "data" / "sample_polar.dat"


def load_sample_propeller():
    """Bundled (geometry, polar) pair."""
    from .bem import load_geometry, load_polar

    return load_geometry(sample_geometry_path()), load_polar(sample_polar_path())
