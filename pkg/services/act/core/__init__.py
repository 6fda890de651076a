"""Process settings and error hierarchy."""
