import sys

from gptree.cli import main

sys.exit(main())
