import sys

from hemd.cli import main

sys.exit(main())
