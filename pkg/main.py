"""
Runs the HashBeam command line from a source checkout without installing.

    python main.py sweep --preset fig3 -o out/
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent / "src"))

from hashbeam.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
