"""Simulated multi-site grid fabric: per-site jobmanagers with CPU slots,
fileservers, tool caches, and a deterministic stand-in physics application."""

from .app import HISTOGRAM_BINS, event_bin, ntuple_csv, run_simulated_app
from .fileserver import FileServer
from .site import Site, SiteConfig, WrapperPhase, start_site

__all__ = [
    "FileServer",
    "HISTOGRAM_BINS",
    "Site",
    "SiteConfig",
    "WrapperPhase",
    "event_bin",
    "ntuple_csv",
    "run_simulated_app",
    "start_site",
]
