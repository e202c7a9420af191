"""Extraction of ``\\boxed{...}`` terminal answers from model replies."""

from __future__ import annotations

_MARKER = "\\boxed{"


def extract_all_boxed(text: str) -> list[str]:
    """Return the contents of every well-formed ``\\boxed{...}`` in order.

    Brace matching is balanced, so nested groups such as
    ``\\boxed{\\frac{1}{2}}`` come back intact. Occurrences whose braces
    never close are skipped.
    """
    found: list[str] = []
    start = 0
    while True:
        idx = text.find(_MARKER, start)
        if idx < 0:
            break
        content = _match_braces(text, idx + len(_MARKER))
        if content is not None:
            found.append(content.strip())
        start = idx + len(_MARKER)
    return found


def extract_boxed(reply: str) -> str | None:
    """Return the last well-formed boxed answer in ``reply``, or None.

    Models often restate the box mid-reasoning; the final occurrence is
    treated as the declared answer. A reply with no balanced occurrence is
    unparseable and yields None.
    """
    found = extract_all_boxed(reply)
    return found[-1] if found else None


def _match_braces(text: str, start: int) -> str | None:
    depth = 1
    for i in range(start, len(text)):
        ch = text[i]
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return text[start:i]
    return None
