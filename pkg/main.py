#!/usr/bin/env python3
"""
bochner-calc - Main Entry Point

Runs the bpcalc command group after loading settings from .env.

Usage:
    python main.py verify config/default_campaign.json
    python main.py eval sqrt -- -4
"""

import sys
from pathlib import Path

# Load environment variables from .env file
try:
    from dotenv import load_dotenv
    load_dotenv()
except ImportError:
    pass  # python-dotenv not installed, use system environment variables

sys.path.insert(0, str(Path(__file__).parent))

from bpcalc.cli import cli  # noqa: E402


def main():
    cli(prog_name='bpcalc')


if __name__ == '__main__':
    main()
