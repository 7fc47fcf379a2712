"""Bundled case files: toy4 (4-bus teaching grid) and rts79 (IEEE RTS-79)."""

from importlib import resources

from ..network import parse_case


def case_text(name):
    """Raw JSON text of a bundled case."""
    return resources.files(__package__).joinpath(f"{name}.json").read_text()


def load_case(name):
    """Parse a bundled case into a Network."""
    return parse_case(case_text(name))
