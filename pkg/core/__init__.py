# Null hypersurface identity checker
