#!/usr/bin/env python3
"""Entry script: python extract.py --backbone <id> --dataset <adapter>
--data-root <dir> --out <file.gapemb> [--split-seed N]"""

from gapextract.cli import main

if __name__ == "__main__":
    raise SystemExit(main())
