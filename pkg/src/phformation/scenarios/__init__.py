"""Bundled scenario files (.scn); load them via phformation.scenario_io."""
