"""mfgpen: penalized solver for linear-quadratic extended mean field games

Solves the game with the terminal constraint X_T = 0 through a ladder of
penalty levels L and their limit, and verifies the properties of the construction.
"""

__version__ = "0.1.0"
