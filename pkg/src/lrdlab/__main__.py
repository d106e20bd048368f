import sys

from lrdlab.cli import main

sys.exit(main())
