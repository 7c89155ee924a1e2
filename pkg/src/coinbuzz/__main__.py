import sys

from coinbuzz.cli import main

if __name__ == "__main__":
    sys.exit(main())
