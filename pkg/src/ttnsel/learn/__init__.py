from .als import ALSOptions, Dataset, ModelRecord, Workspace, empirical_risk, fit_als, run_als
