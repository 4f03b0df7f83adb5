# backend/core/config.py
import os

from dotenv import load_dotenv

load_dotenv()


class Settings:
    PROJECT_NAME: str = "alpha-sde"
    VERSION: str = "1.0.0"

    # Path of the 'backend' folder, so relative defaults work from any cwd
    BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

    # Artifacts land here unless a config or --out says otherwise
    OUTPUT_DIR = os.getenv("ALPHA_SDE_OUTPUT_DIR", os.path.join(os.getcwd(), "runs"))

    DEFAULT_THREADS = int(os.getenv("ALPHA_SDE_THREADS", "1"))


# Create a single instance to use everywhere
settings = Settings()
