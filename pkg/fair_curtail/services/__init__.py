"""Grid model, power flow, feasibility, welfare, solvers and simulation services."""
