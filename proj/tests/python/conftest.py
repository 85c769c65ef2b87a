import os
import sys

# allow running against an in-tree build: CMake exports the module dir
module_dir = os.environ.get("EXITPERRON_MODULE_DIR")
if module_dir and module_dir not in sys.path:
    sys.path.insert(0, module_dir)
