#pragma once

#include <vector>

namespace hams {

// Minimum-cost assignment of rows to columns (Jonker-Volgenant style shortest
// augmenting paths). cost is row-major rows x cols with rows <= cols; every
// row ends up assigned. Handles negative costs. Returns row -> column.
std::vector<int> solve_assignment(const std::vector<double>& cost, int rows, int cols);

}  // namespace hams
