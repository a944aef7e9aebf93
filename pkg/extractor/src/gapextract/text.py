"""Deterministic metadata-to-text templating.

Templates are versioned data, not code: each entry names the fields it
renders (in order) so the exact text construction is auditable from the
output manifest.
"""

import logging

logger = logging.getLogger(__name__)

MISSING_TOKEN = "unknown"

# name -> ordered field list, or None meaning "all fields in stored order"
TEMPLATES: dict[str, list[str] | None] = {
    "kv": None,
    "skin-lesion": ["diagnosis", "age", "sex", "localization"],
    "retina": ["diagnosis", "age", "sex", "camera"],
    "radiology-report": ["findings", "impression"],
}


def template_fields(template: str) -> list[str] | None:
    if template not in TEMPLATES:
        raise KeyError(
            f"unknown template {template!r}; available: {sorted(TEMPLATES)}"
        )
    return TEMPLATES[template]


def build_text(metadata: dict, template: str = "kv") -> str:
    """Render sample metadata as a deterministic key-value sentence.

    Missing or empty required fields render as the placeholder "unknown"
    and are logged; empty metadata renders as "unknown" alone.
    """
    fields = template_fields(template)
    if fields is None:
        fields = list(metadata.keys())
    if not fields:
        return MISSING_TOKEN
    clauses = []
    for key in fields:
        value = metadata.get(key)
        if value is None or value == "":
            logger.warning("metadata field %r missing; using placeholder", key)
            value = MISSING_TOKEN
        clauses.append(f"{key}: {value}")
    return ", ".join(clauses)
