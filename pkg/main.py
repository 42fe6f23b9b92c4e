#!/usr/bin/env python3
"""
Keller-Segel blow-up bounds toolkit.

Run with:
    python main.py bounds --mass 50.2655 --alpha 1 --variance 0.05
    python main.py --help
"""
import logging
import sys

from cli import dispatch

logger = logging.getLogger(__name__)


def main(argv=None) -> int:
    """Main entry point"""
    try:
        return dispatch(argv)
    except KeyboardInterrupt:
        logger.info("Interrupted")
        return 130


if __name__ == "__main__":
    sys.exit(main())
