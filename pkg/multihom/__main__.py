"""
Allow running the multihom package as a module: python -m multihom
"""

from .cli import main

if __name__ == '__main__':
    main()
