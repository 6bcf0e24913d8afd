"""Module entry point for 'python -m replab'."""

import sys

from .replab import main

if __name__ == "__main__":
    sys.exit(main())
