"""CopulaCQR package entry point (`python -m src`)."""
import sys
import os

# Disable __pycache__ generation
sys.dont_write_bytecode = True

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from cli.cqr_cli import app

if __name__ == "__main__":
    app()
