import sys

from shadowham.cli import main

sys.exit(main())
