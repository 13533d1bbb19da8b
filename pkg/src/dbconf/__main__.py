"""Allow ``python -m dbconf`` as an alias for the ``dbconf`` console script."""

import sys

from dbconf.cli import main

if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
