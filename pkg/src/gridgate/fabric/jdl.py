"""Parsing of broker job-description documents.

A document is a sequence of lines of the exact shape

    Key = "value";

carrying the keys Executable, Arguments, InputSandbox, OutputSandbox, and
Requirements. The matching renderer lives in the dispatcher; this parser is
what a broker-kind site runs on hand-off.
"""

from __future__ import annotations

import re

from ..errors import MalformedDescription

REQUIRED_KEYS = ("Executable", "Arguments", "InputSandbox", "OutputSandbox", "Requirements")

_LINE_RE = re.compile(r'^(?P<key>[A-Za-z]+)\s*=\s*"(?P<value>[^"]*)";$')


def parse_description(document: str) -> dict[str, str]:
    """Field map of the document; raises MalformedDescription on any defect."""
    fields: dict[str, str] = {}
    for raw in document.splitlines():
        line = raw.strip()
        if not line:
            continue
        m = _LINE_RE.match(line)
        if not m:
            raise MalformedDescription(f"bad line {line!r}")
        key = m.group("key")
        if key not in REQUIRED_KEYS:
            raise MalformedDescription(f"unknown key {key!r}")
        if key in fields:
            raise MalformedDescription(f"duplicate key {key!r}")
        fields[key] = m.group("value")
    for key in REQUIRED_KEYS:
        if key not in fields:
            raise MalformedDescription(f"missing {key} line")
    return fields
