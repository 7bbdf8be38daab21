#include "bcl/grid.hpp"

// Grid types are header-only; this TU anchors the library target.
