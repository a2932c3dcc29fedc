# config package: environment settings and experiment defaults
