"""Entry point for ``python -m motion_evolve``."""

from __future__ import annotations

import sys

from .cli import main

sys.exit(main())
