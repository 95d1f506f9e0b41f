"""JSON form of a design model (the ``parse`` subcommand output)."""

from __future__ import annotations

from .model import DesignModel, ModuleDecl


def module_to_json(m: ModuleDecl) -> dict:
    return {
        "name": m.name,
        "file": m.file,
        "language": m.language.value,
        "line": m.line,
        "element_count": m.element_count,
        "ports": [
            {"name": p.name, "direction": p.direction, "msb": p.msb, "lsb": p.lsb, "width": p.width_bits}
            for p in m.ports
        ],
        "signals": [
            {"name": s.name, "kind": s.kind, "msb": s.msb, "lsb": s.lsb, "depth": s.depth, "width": s.width_bits}
            for s in m.signals
        ],
        "parameters": [{"name": n, "default": d} for n, d in m.parameters],
        "instances": [
            {
                "instance_name": i.instance_name,
                "target": i.target,
                "port_map": [{"formal": f, "actual": a} for f, a in i.port_map],
            }
            for i in m.instances
        ],
        "notes": list(m.notes),
    }


def model_to_json(model: DesignModel) -> dict:
    return {
        "modules": [module_to_json(m) for m in model],
        "element_count": model.element_count,
        "roots": model.roots(),
        "external_targets": sorted(model.external_targets()),
        "warnings": list(model.warnings),
    }
