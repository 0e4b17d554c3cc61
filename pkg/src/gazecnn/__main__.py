"""``python -m gazecnn``."""

from .cli import main

main()
