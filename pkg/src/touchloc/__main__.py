import sys

from touchloc.cli import main

sys.exit(main())
