# Test package for guirl
