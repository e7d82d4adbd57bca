import sys

from voxphys.cli.main import main

sys.exit(main())
