"""Oracle self-check; exit status 0 when every check passes."""

import sys

from xxzness.cli import main

if __name__ == "__main__":
    sys.exit(main(["check", *sys.argv[1:]]))
