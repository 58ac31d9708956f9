import sys

from specklenet.cli import main

sys.exit(main())
