# Experiment services package