"""
Numerical library: graded L1 time stepping, P1 finite elements on the unit
square, sparse solvers and the manufactured problem bank
"""
