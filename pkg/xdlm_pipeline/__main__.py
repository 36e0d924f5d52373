import sys

from xdlm_pipeline.cli import main

sys.exit(main())
