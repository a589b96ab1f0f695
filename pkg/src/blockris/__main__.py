import sys

from blockris.cli import main

sys.exit(main())
