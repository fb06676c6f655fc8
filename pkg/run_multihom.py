"""
multihom -- Multiscale Homogenization Launcher

This script provides a quick way to run the command-line tool from a
checkout without installing it.

Usage:
    python run_multihom.py effective --lambda 1,2.5 --resolution 64
    python run_multihom.py convergence --config conv.toml -v

Exit codes:
    0 -- success
    1 -- an experiment verdict failed
    2 -- configuration or precondition error
    3 -- numerical failure
"""

from multihom.cli import main

if __name__ == '__main__':
    main()
