"""HDL front end: parse a repository into an immutable design model."""

from .model import (
    DesignModel,
    HierarchyPath,
    InstanceDecl,
    Language,
    ModuleDecl,
    PortDecl,
    SignalDecl,
    hierarchy_paths,
)
from .repo import list_modules, load_design, parse_module

__all__ = [
    "DesignModel",
    "HierarchyPath",
    "InstanceDecl",
    "Language",
    "ModuleDecl",
    "PortDecl",
    "SignalDecl",
    "hierarchy_paths",
    "list_modules",
    "load_design",
    "parse_module",
]
