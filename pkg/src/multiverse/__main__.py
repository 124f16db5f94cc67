import sys

from multiverse.cli import main

sys.exit(main())
