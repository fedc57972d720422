# Shared utilities for the DNNGP toolkit
