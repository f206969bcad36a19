import sys

from kkt_tracker.cli import main

sys.exit(main())
