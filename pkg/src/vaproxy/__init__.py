"""Proxy valuation of variable-annuity liabilities under a one-year horizon.

The modules follow the data flow: ``esg`` and ``mortality`` generate
scenarios, ``product`` turns them into cash flows, ``nested`` values them by
brute force, ``rp`` and ``nn`` fit the proxies, ``metrics`` scores the
resulting loss distributions.
"""

__version__ = "0.1.0"
