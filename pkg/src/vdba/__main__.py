import sys

from vdba.cli import main

sys.exit(main())
