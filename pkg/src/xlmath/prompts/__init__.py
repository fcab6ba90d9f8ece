"""Prompt template library: asset loading, placeholder substitution, shot assembly.

Templates live as plain text files next to a manifest so they can be diffed
and replaced without touching code; ids are stable API. Text templates render
to a single string; conversation templates (role-tagged sections) render to
an ordered message list. Rendering is deterministic and substitutes only the
declared placeholders, leaving every other brace untouched, since math
content is full of literal braces.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

ASSET_DIR = Path(__file__).parent / "assets"

ROLES = ("system", "user", "assistant")

_SECTION_RE = re.compile(r"^\[(system|user|assistant)\]$", re.MULTILINE)

SHOT_BLOCK = "### INPUT:\n{input}\n\n### OUTPUT:\n{output}\n\n"


class PromptError(ValueError):
    """Unknown template, missing placeholder binding, or malformed asset."""


@dataclass(frozen=True)
class Shot:
    input: str
    output: str


@dataclass(frozen=True)
class PromptTemplate:
    """One template asset: body text, declared placeholders, optional shots."""

    id: str
    kind: str
    body: str
    placeholders: tuple[str, ...]
    shots: tuple[Shot, ...] = ()


def _read_text(path: Path) -> str:
    text = path.read_text(encoding="utf-8")
    # asset files end with exactly one newline that is not part of the body
    if text.endswith("\n"):
        text = text[:-1]
    return text


def _check_declared(template_id: str, body: str, declared: set[str]) -> None:
    used = set(re.findall(r"\{([a-z_]+)\}", body))
    undeclared = used - declared
    if undeclared:
        raise PromptError(
            f"template {template_id!r} uses undeclared placeholders: {sorted(undeclared)}"
        )


class PromptLibrary:
    """Read-only registry of templates loaded from an asset directory."""

    def __init__(self, asset_dir: Path | str = ASSET_DIR):
        self._dir = Path(asset_dir)
        manifest_path = self._dir / "manifest.json"
        try:
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise PromptError(f"cannot load template manifest: {exc}") from exc
        self._templates: dict[str, PromptTemplate] = {}
        for template_id, entry in manifest["templates"].items():
            body = _read_text(self._dir / entry["file"])
            shots: tuple[Shot, ...] = ()
            declared = set(entry["placeholders"])
            if "shots_file" in entry:
                raw = json.loads((self._dir / entry["shots_file"]).read_text("utf-8"))
                shots = tuple(Shot(s["input"], s["output"]) for s in raw)
                declared.add("shots")
            _check_declared(template_id, body, declared)
            self._templates[template_id] = PromptTemplate(
                id=template_id,
                kind=entry["kind"],
                body=body,
                placeholders=tuple(entry["placeholders"]),
                shots=shots,
            )

    def template(self, template_id: str) -> PromptTemplate:
        try:
            return self._templates[template_id]
        except KeyError:
            raise PromptError(f"unknown template id: {template_id!r}") from None

    def ids(self) -> tuple[str, ...]:
        return tuple(self._templates)

    def _substitution(self, template: PromptTemplate, bindings: dict[str, str]):
        expected = set(template.placeholders)
        missing = expected - set(bindings)
        if missing:
            raise PromptError(
                f"template {template.id!r} missing binding for placeholder "
                f"{sorted(missing)[0]!r}"
            )
        extra = set(bindings) - expected
        if extra:
            raise PromptError(
                f"template {template.id!r} got unexpected binding {sorted(extra)[0]!r}"
            )
        values = dict(bindings)
        if template.shots:
            values["shots"] = "".join(
                SHOT_BLOCK.format(input=shot.input, output=shot.output)
                for shot in template.shots
            )
        if not values:
            return lambda text: text
        pattern = re.compile("|".join(r"\{" + re.escape(n) + r"\}" for n in values))
        return lambda text: pattern.sub(lambda m: values[m.group(0)[1:-1]], text)

    def render(self, template_id: str, bindings: dict[str, str]) -> str:
        """Render a text template to its exact prompt string."""
        template = self.template(template_id)
        if template.kind != "text":
            raise PromptError(
                f"template {template_id!r} is a conversation; use render_messages"
            )
        return self._substitution(template, bindings)(template.body)

    def render_messages(
        self, template_id: str, bindings: dict[str, str]
    ) -> list[tuple[str, str]]:
        """Render any template to an ordered (role, text) message list.

        Conversations are split into turns before substitution so binding
        values can never introduce new turns.
        """
        template = self.template(template_id)
        substitute = self._substitution(template, bindings)
        if template.kind == "text":
            return [("user", substitute(template.body))]
        return [
            (role, substitute(content))
            for role, content in _split_conversation(template_id, template.body)
        ]

    def render_judge_pair(
        self, question: str, answer_a: str, answer_b: str, swap: bool
    ) -> list[tuple[str, str]]:
        """Judge prompt with the two answers assigned to slots A/B.

        When ``swap`` is true the answers exchange slots; the caller records
        the permutation so the verdict can be mapped back to the original
        contestants.
        """
        first, second = (answer_b, answer_a) if swap else (answer_a, answer_b)
        return self.render_messages(
            "judge",
            {"question": question, "model_a_answer": first, "model_b_answer": second},
        )


def _split_conversation(template_id: str, text: str) -> list[tuple[str, str]]:
    matches = list(_SECTION_RE.finditer(text))
    if not matches or matches[0].start() != 0:
        raise PromptError(f"conversation template {template_id!r} must start with a role tag")
    messages = []
    for i, match in enumerate(matches):
        start = match.end()
        end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        content = text[start:end].strip("\n")
        messages.append((match.group(1), content))
    return messages


_default_library: PromptLibrary | None = None


def default_library() -> PromptLibrary:
    """Process-wide library over the packaged assets, loaded once."""
    global _default_library
    if _default_library is None:
        _default_library = PromptLibrary()
    return _default_library


def render(template_id: str, bindings: dict[str, str]) -> str:
    return default_library().render(template_id, bindings)


def render_messages(template_id: str, bindings: dict[str, str]) -> list[tuple[str, str]]:
    return default_library().render_messages(template_id, bindings)


def render_judge_pair(
    question: str, answer_a: str, answer_b: str, swap: bool
) -> list[tuple[str, str]]:
    return default_library().render_judge_pair(question, answer_a, answer_b, swap)
