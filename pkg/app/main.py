# app/main.py
import sys

from .cli.commands import main


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
