import sys

from mapirl.cli import main

sys.exit(main())
