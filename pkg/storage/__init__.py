# File-backed storage for instances and run artifacts
