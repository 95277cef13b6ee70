"""Monte Carlo simulator and analysis toolkit for Franson-type Bell tests"""

__version__ = "0.0.1"
