"""Bundled item list and affordance table (JSON, overridable via config paths)."""
from __future__ import annotations

import json
from importlib import resources


def _load(name: str):
    with resources.files(__package__).joinpath(name).open("r", encoding="utf-8") as f:
        return json.load(f)


def default_items() -> list[str]:
    return _load("items.json")


def default_affordances() -> dict[str, str]:
    return _load("affordances.json")
