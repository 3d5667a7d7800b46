"""dflx: dyadic energy-flux diagnostics for periodic incompressible velocity fields."""
__version__ = "0.1.0"
