import sys

from privateequilibria.utils.cli import main

sys.exit(main())
