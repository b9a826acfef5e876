#pragma once

#include <vector>

namespace harmonize {

// Gauss-Legendre rule on [-1, 1].
struct GaussLegendre {
  std::vector<double> nodes;
  std::vector<double> weights;
};

GaussLegendre gauss_legendre(int points);

// Nodes and weights mapped onto [lo, hi]; weights sum to hi - lo.
GaussLegendre gauss_legendre(int points, double lo, double hi);

}  // namespace harmonize
