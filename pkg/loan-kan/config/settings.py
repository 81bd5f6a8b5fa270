# config/settings.py
import logging
import os

from dotenv import load_dotenv

load_dotenv()

LOG_FORMAT = "%(asctime)s %(name)s %(levelname)s: %(message)s"


class Config:
    VERSION = '0.1.0'

    # Logging
    LOG_LEVEL = os.getenv('LOANKAN_LOG_LEVEL', 'INFO')

    # Runs
    OUTPUT_DIR = os.getenv('LOANKAN_OUTPUT_DIR', 'runs')
    THREADS = int(os.getenv('LOANKAN_THREADS', '1'))
    DEFAULT_SEED = int(os.getenv('LOANKAN_SEED', '20240601'))

    # File Paths
    APP_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    COLUMN_MAP_PATH = os.getenv('LOANKAN_COLUMN_MAP', os.path.join(APP_DIR, 'data', 'column_map.json'))
    EXPERIMENTS_DIR = os.path.join(APP_DIR, 'data', 'experiments')

    # Ingestion
    READ_CHUNK_SIZE = int(os.getenv('LOANKAN_READ_CHUNK', '200000'))
    MAX_LOGGED_SKIPS = 5

    # Tests
    SLOW_TESTS = os.getenv('LOANKAN_SLOW_TESTS', '0') == '1'


def setup_logging(level: str = None):
    """Configure the package root logger once; repeated calls only change the level"""
    root = logging.getLogger()
    if not any(getattr(h, '_loankan', False) for h in root.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._loankan = True
        root.addHandler(handler)
    root.setLevel((level or Config.LOG_LEVEL).upper())
