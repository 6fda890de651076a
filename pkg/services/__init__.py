"""
Services Package

Services:
    - act: cross-domain graph anomaly detection toolkit
"""
