"""Response template catalog with deterministic variant cycling.

Variant selection is a pure function of how often a template was already
used in the session, so replayed conversations render identically.
"""

from __future__ import annotations

from dataclasses import dataclass

from .responses import Payload, QuickReplies, Response, Text

__all__ = ["TemplateError", "TemplateVariant", "TemplateCatalog"]


class TemplateError(ValueError):
    """Raised for malformed catalogs or unresolvable bindings."""


@dataclass(frozen=True)
class TemplateVariant:
    text: str
    options: tuple[str, ...] = ()


class TemplateCatalog:
    """Immutable map from template id to its ordered response variants."""

    def __init__(self, templates: dict[str, list[TemplateVariant]]):
        for template_id, variants in templates.items():
            if not template_id:
                raise TemplateError("template with empty id")
            if not variants:
                raise TemplateError(f"template {template_id!r} has no variants")
        self._templates = {tid: tuple(vs) for tid, vs in templates.items()}

    @classmethod
    def from_config(cls, doc: dict) -> "TemplateCatalog":
        """Parse {id: [variant...]} where a variant is a string or
        {"text": ..., "options": [...]}."""
        templates: dict[str, list[TemplateVariant]] = {}
        for template_id, raw_variants in doc.items():
            variants = []
            for raw in raw_variants:
                if isinstance(raw, str):
                    variants.append(TemplateVariant(text=raw))
                else:
                    variants.append(
                        TemplateVariant(
                            text=raw["text"],
                            options=tuple(raw.get("options", ())),
                        )
                    )
            templates[template_id] = variants
        return cls(templates)

    def __contains__(self, template_id: str) -> bool:
        return template_id in self._templates

    def ids(self) -> set[str]:
        return set(self._templates)

    def render(
        self,
        template_id: str,
        uses: dict[str, int],
        bindings: dict | None = None,
        skill: str | None = None,
    ) -> Response:
        """Render the next variant in cycle order and bump the use counter.

        ``uses`` is the per-session counter map; the variant index is the
        prior use count modulo the variant count.
        """
        variants = self._templates.get(template_id)
        if variants is None:
            raise TemplateError(f"unknown template id: {template_id!r}")
        count = uses.get(template_id, 0)
        uses[template_id] = count + 1
        variant = variants[count % len(variants)]
        try:
            text = variant.text.format(**(bindings or {}))
        except (KeyError, IndexError) as exc:
            raise TemplateError(
                f"template {template_id!r} missing binding: {exc}"
            ) from exc
        payload: Payload
        if variant.options:
            payload = QuickReplies(prompt=text, options=variant.options)
        else:
            payload = Text(text)
        return Response(payload=payload, template_id=template_id, skill=skill)
