import sys

from atvgarch.cli import main

sys.exit(main())
