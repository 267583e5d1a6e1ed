import sys

from dynlearn.cli import main

sys.exit(main())
