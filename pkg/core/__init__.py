# core package: simulation, scheduling and oracle modules
