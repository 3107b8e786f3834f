"""Seedable simulator of a cloud-assisted mobile ad-hoc network of smart devices."""

__version__ = "0.1.0"
