"""Bundled NCO-1968 two-digit occupation groups."""

from __future__ import annotations

import csv
from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=1)
def nco_table() -> dict[str, tuple[str, str]]:
    """Map each 2-digit group code to ``(division, title)``."""
    text = resources.files("occnet").joinpath("data/nco1968.csv").read_text(encoding="utf-8")
    reader = csv.DictReader(text.splitlines())
    return {row["code"]: (row["division"], row["title"]) for row in reader}


def is_valid_code(code: str) -> bool:
    return code in nco_table()


def title(code: str) -> str:
    entry = nco_table().get(code)
    return entry[1] if entry else ""


def normalize_code(raw: str) -> str:
    """Canonicalize a cell value to a 2-character code ("1" -> "01")."""
    code = raw.strip()
    if code.isdigit() and len(code) == 1:
        code = "0" + code
    return code
