# Test package initialization