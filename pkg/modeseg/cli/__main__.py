"""Allow the CLI package to be executed directly."""

from .main import main

if __name__ == "__main__":
    main()
