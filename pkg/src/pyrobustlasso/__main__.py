"""Application entry point."""

import sys
from collections.abc import Sequence

from pyrobustlasso.cli import run


def main(argv: Sequence[str] | None = None) -> None:
    """Console-script entry point."""
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
