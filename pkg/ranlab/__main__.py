import sys

from ranlab.main import main

sys.exit(main())
