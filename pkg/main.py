#!/usr/bin/env python3
"""CopulaCQR - Root Entry Point.

Usage: `python main.py simulate --dgp A --n 200 --tau 0.3 --B 20 --seed 7`
"""
import sys
import os

# Disable __pycache__ generation
sys.dont_write_bytecode = True

# Add the project root to path to support the src layout
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from cli.cqr_cli import app

if __name__ == "__main__":
    app()
