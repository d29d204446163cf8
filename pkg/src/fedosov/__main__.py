from __future__ import annotations

import sys

from fedosov.cli import main

sys.exit(main())
