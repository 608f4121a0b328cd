"""Collects one verdict line per acceptance criterion for the terminal summary."""

RESULTS: dict[int, str] = {}


def record(number: int, ok: bool, detail: str) -> str:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[number] = line
    print(line)
    return line
