"""Run the loan-kan command line from the repository root: `python app.py window-sweep --config ...`"""
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), "loan-kan"))

from app import main  # noqa: E402  (loan-kan/app.py)

if __name__ == "__main__":
    sys.exit(main())
