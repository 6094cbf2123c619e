"""Collects per-criterion outcomes and a one-line summary of what was measured."""

OUTCOMES: dict[int, str] = {}
DETAILS: dict[int, str] = {}


def note(n: int, text: str) -> None:
    DETAILS[n] = text
    print(f"[criterion {n}] {text}")
