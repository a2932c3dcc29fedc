import os
from dotenv import load_dotenv
load_dotenv()

HYSSIM_LOG_LEVEL = os.getenv("HYSSIM_LOG_LEVEL", "INFO")
HYSSIM_SWEEP_WORKERS = int(os.getenv("HYSSIM_SWEEP_WORKERS", "0") or 0) or (os.cpu_count() or 1)
HYSSIM_DEFAULTS_FILE = os.getenv(
    "HYSSIM_DEFAULTS_FILE",
    os.path.join(os.path.dirname(__file__), "defaults.cfg"),
)
HYSSIM_OUTPUT_DIR = os.getenv("HYSSIM_OUTPUT_DIR", ".")
