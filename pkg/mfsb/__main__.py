import sys

from mfsb.cli import main

sys.exit(main())
