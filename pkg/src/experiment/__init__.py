# Experiment handler package