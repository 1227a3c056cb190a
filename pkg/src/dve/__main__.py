import sys

from dve.cli import main

sys.exit(main())
