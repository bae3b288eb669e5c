#pragma once

#include <functional>
#include <vector>

namespace photonchain::optim {

using Point = std::vector<double>;
using Objective = std::function<double(const Point&)>;

struct NelderMeadOptions {
  int max_iterations = 500;
  double f_tolerance = 1e-4;  // stop when max - min over the simplex drops below this
  unsigned threads = 0;       // for batch evaluations (initial simplex, shrink)
};

struct NelderMeadStep {
  int iteration = 0;
  double best_value = 0.0;
  Point best_point;
};

struct NelderMeadResult {
  Point point;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::vector<NelderMeadStep> trace;
};

/// Derivative-free simplex minimization. The initial simplex is x0 plus
/// x0 + steps[i] e_i. Ties are broken by lexicographic point order, so the
/// result is independent of the thread count. Never throws on the iteration
/// cap; check `converged`.
NelderMeadResult nelder_mead(const Objective& objective, const Point& x0, const Point& steps,
                             const NelderMeadOptions& options = {});

}  // namespace photonchain::optim
