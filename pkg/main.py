#!/usr/bin/env python3
"""
polyglot-qe - Polyglot query engine
Main application entry point.
"""

import sys
from pathlib import Path

# Add src directory to Python path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root / "src"))

from polyglot_qe.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
