import os
import sys
from pathlib import Path

# Small matrices everywhere: single-threaded BLAS is faster and keeps runs
# bit-reproducible while seed workers occupy the cores.  Must happen before
# numpy loads.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

sys.path.insert(0, str(Path(__file__).parent))
