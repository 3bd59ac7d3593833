"""Rewrite tests/golden/ from the current code.  Run: ``python3 tests/regen_goldens.py``.

Only do this after a deliberate behaviour change; review the diff before committing.
"""

from __future__ import annotations

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from _golden import GOLDEN_DIR, run_golden, wait_calendar  # noqa: E402


def main() -> int:
    files, summary, seconds = run_golden()
    files["calendar_wait_fixture.txt"] = wait_calendar()
    for rel, text in sorted(files.items()):
        path = GOLDEN_DIR / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        print(f"wrote {path.relative_to(GOLDEN_DIR.parent)}")
    print(f"golden scenario took {seconds:.1f} s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
