"""Allow ``python -m ucfem``."""
import sys

from ucfem.cli import main

if __name__ == "__main__":
    sys.exit(main())
