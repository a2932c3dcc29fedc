# data package: bundled example traces
