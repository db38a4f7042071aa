#!/usr/bin/python3

from .app import main

if __name__ == "__main__":
    main()
