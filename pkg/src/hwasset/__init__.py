"""Security asset identification toolchain for RTL designs."""

__version__ = "0.1.0"
