# Core Package

