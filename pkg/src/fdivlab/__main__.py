import sys

from fdivlab.cli import main

sys.exit(main())
