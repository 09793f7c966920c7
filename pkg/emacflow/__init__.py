"""
emacflow: 2D incompressible Navier-Stokes with Taylor-Hood elements, the
EMAC convection form, backward Euler and a second-order time filter
"""
__version__ = "1.0.0"
