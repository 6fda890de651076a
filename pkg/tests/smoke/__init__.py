# Smoke tests for Aquaculture ML Platform
