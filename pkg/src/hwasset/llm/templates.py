"""Prompt templates, in-context exemplars and the prompt library.

Templates and exemplars are JSON files so they can be edited without
touching code.  A template's user text uses ``$name`` placeholders
(:class:`string.Template` syntax); every placeholder must be bound when
the template is rendered.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from string import Template
from typing import Optional

import jsonschema

from ..errors import ParameterError

log = logging.getLogger(__name__)

TEMPLATE_IDS = (
    "Prune",
    "Summarize",
    "LLMparse_ports",
    "LLMparse_signals",
    "LLMasset",
    "SecAsset",
    "LLMattack",
    "LLMcwe",
    "LLMref",
)


def placeholders(text: str) -> set[str]:
    out = set()
    for m in Template.pattern.finditer(text):
        name = m.group("named") or m.group("braced")
        if name:
            out.add(name)
        elif m.group("invalid") is not None:
            raise ParameterError(f"malformed placeholder near offset {m.start()}")
    return out


@dataclass(frozen=True)
class IclExample:
    name: str
    bindings: dict
    output: object


@dataclass(frozen=True)
class Message:
    role: str
    content: str

    def to_json(self):
        return {"role": self.role, "content": self.content}


@dataclass
class PromptTemplate:
    id: str
    system_text: str
    user_template: str
    response_schema: Optional[dict] = None  # None: free-text reply
    icl_examples: list = field(default_factory=list)
    description: str = ""

    def __post_init__(self):
        self._placeholders = placeholders(self.user_template)
        if self.response_schema is not None:
            jsonschema.Draft202012Validator.check_schema(self.response_schema)
            self.validator = jsonschema.Draft202012Validator(self.response_schema)
        else:
            self.validator = None
        for ex in self.icl_examples:
            self.check_example(ex)

    @property
    def structured(self) -> bool:
        return self.response_schema is not None

    @property
    def placeholder_names(self) -> set[str]:
        return set(self._placeholders)

    def check_example(self, ex: IclExample) -> None:
        missing = self._placeholders - set(ex.bindings)
        if missing:
            raise ParameterError(f"{self.id}: exemplar {ex.name!r} lacks bindings {sorted(missing)}")
        if self.validator is not None:
            errors = sorted(self.validator.iter_errors(ex.output), key=lambda e: list(e.path))
            if errors:
                raise ParameterError(f"{self.id}: exemplar {ex.name!r} violates schema: {errors[0].message}")

    def render_user(self, bindings: dict) -> str:
        missing = self._placeholders - set(bindings)
        if missing:
            raise ParameterError(f"{self.id}: unbound placeholders {sorted(missing)}")
        return Template(self.user_template).substitute({k: _text(v) for k, v in bindings.items()})

    def render(self, bindings: dict) -> list[Message]:
        system = self.system_text
        if self.response_schema is not None:
            system += "\n\nReply with a single JSON document matching this schema:\n" + json.dumps(
                self.response_schema, sort_keys=True
            )
        msgs = [Message("system", system)]
        for ex in self.icl_examples:
            msgs.append(Message("user", self.render_user(ex.bindings)))
            out = ex.output if isinstance(ex.output, str) else json.dumps(ex.output, indent=1)
            msgs.append(Message("assistant", out))
        msgs.append(Message("user", self.render_user(bindings)))
        return msgs


def _text(v) -> str:
    if isinstance(v, str):
        return v
    return json.dumps(v, indent=1, sort_keys=True)


def conversation_text(messages) -> str:
    """Canonical text of a message list, used for hashing."""
    return "\n".join(f"<{m.role}>\n{m.content}" for m in messages)


def prompt_hash(template_id: str, messages, model: str) -> str:
    h = hashlib.sha256()
    for part in (template_id, conversation_text(messages), model):
        h.update(part.encode("utf-8"))
        h.update(b"\x00")
    return h.hexdigest()


class PromptLibrary:
    def __init__(self, templates: dict):
        self.templates = dict(templates)

    def __getitem__(self, template_id: str) -> PromptTemplate:
        try:
            return self.templates[template_id]
        except KeyError:
            raise KeyError(f"unknown prompt template {template_id!r}") from None

    def __contains__(self, template_id):
        return template_id in self.templates

    def __iter__(self):
        return iter(self.templates.values())

    @classmethod
    def load(cls, prompts_dir=None, icl_dir=None) -> "PromptLibrary":
        """Read templates and exemplars; defaults are the bundled files."""
        pdir = Path(prompts_dir) if prompts_dir else resources.files(__package__).joinpath("prompts")
        idir = Path(icl_dir) if icl_dir else resources.files(__package__).joinpath("icl")
        examples: dict[str, list] = {}
        for entry in sorted(idir.iterdir(), key=lambda p: p.name):
            if not entry.name.endswith(".json"):
                continue
            data = json.loads(entry.read_text(encoding="utf-8"))
            for ex in data.get("examples", ()):
                examples.setdefault(ex["template"], []).append(
                    IclExample(f"{entry.name}:{ex.get('name', '')}", ex["bindings"], ex["output"])
                )
        templates = {}
        for entry in sorted(pdir.iterdir(), key=lambda p: p.name):
            if not entry.name.endswith(".json"):
                continue
            d = json.loads(entry.read_text(encoding="utf-8"))
            tid = d["id"]
            templates[tid] = PromptTemplate(
                id=tid,
                system_text=d["system"],
                user_template=d["user"],
                response_schema=d.get("response_schema"),
                icl_examples=examples.get(tid, []),
                description=d.get("description", ""),
            )
        unknown = set(examples) - set(templates)
        if unknown:
            raise ParameterError(f"exemplars for unknown templates: {sorted(unknown)}")
        missing = set(TEMPLATE_IDS) - set(templates)
        if missing:
            raise ParameterError(f"prompt library lacks templates: {sorted(missing)}")
        return cls(templates)
