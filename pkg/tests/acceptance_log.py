"""Registry of acceptance results, printed by conftest at the end of the run."""

RESULTS: dict[int, str] = {}


def report(number: int, passed: bool, title: str, detail: str = "") -> str:
    line = f"CRITERION {number:2d} {'PASS' if passed else 'FAIL'}  {title}"
    if detail:
        line += f"  [{detail}]"
    RESULTS[number] = line
    print(line)
    return line
