"""This folder contains all test cases which should be disovered using pytest."""
