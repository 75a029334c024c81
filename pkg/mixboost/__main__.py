import sys

from mixboost.cli import main

sys.exit(main())
