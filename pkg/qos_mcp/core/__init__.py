"""
Domain core: state-space toolkit, forecasting, feedback controller, channel plant and metrics.
"""
