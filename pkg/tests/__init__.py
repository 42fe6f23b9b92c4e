# Test package for the Keller-Segel blow-up bounds toolkit
