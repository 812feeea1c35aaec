import sys

from dotenv import load_dotenv

from src.cli_io import main

# Load environment variables (AOI_<KEY> overrides) from .env file
load_dotenv()

if __name__ == "__main__":
    sys.exit(main())
