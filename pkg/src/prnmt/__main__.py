import sys
from prnmt.cli import main

sys.exit(main())
