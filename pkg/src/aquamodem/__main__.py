import sys

from aquamodem.cli import main

sys.exit(main())
