# Propagation speed used throughout the model (m/s). The rounded value keeps
# the closed-form reference numbers (e.g. 4*pi*f*r/c at 300 GHz, 1 m) exact.
SPEED_OF_LIGHT = 3.0e8
