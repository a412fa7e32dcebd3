"""mtctl: deterministic materials-testing machine controller with a simulated plant."""

__version__ = "0.1.0"
