import sys

from steklov_lab.app import main


if __name__ == "__main__":
    sys.exit(main())
