#include "photonchain/nelder_mead.hpp"

#include <algorithm>
#include <numeric>

#include "photonchain/errors.hpp"
#include "photonchain/parallel.hpp"

namespace photonchain::optim {

namespace {

struct Vertex {
  Point x;
  double f = 0.0;
};

bool vertex_less(const Vertex& a, const Vertex& b) {
  if (a.f != b.f) return a.f < b.f;
  return a.x < b.x;
}

Point affine(const Point& base, const Point& toward, double t) {
  Point out(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) out[i] = base[i] + t * (toward[i] - base[i]);
  return out;
}

}  // namespace

NelderMeadResult nelder_mead(const Objective& objective, const Point& x0, const Point& steps,
                             const NelderMeadOptions& options) {
  const std::size_t dim = x0.size();
  if (dim == 0 || steps.size() != dim) throw DomainError("Nelder-Mead needs matching non-empty x0 and steps");

  NelderMeadResult result;
  const auto evaluate_batch = [&](std::vector<Vertex>& vs, std::size_t from) {
    parallel_for(vs.size() - from, [&](std::size_t i) { vs[from + i].f = objective(vs[from + i].x); },
                 options.threads);
    result.evaluations += static_cast<int>(vs.size() - from);
  };
  const auto evaluate = [&](const Point& x) {
    ++result.evaluations;
    return objective(x);
  };

  std::vector<Vertex> simplex(dim + 1, Vertex{x0, 0.0});
  for (std::size_t i = 0; i < dim; ++i) simplex[i + 1].x[i] += steps[i];
  evaluate_batch(simplex, 0);

  for (int iter = 0;; ++iter) {
    std::sort(simplex.begin(), simplex.end(), vertex_less);
    result.trace.push_back({iter, simplex.front().f, simplex.front().x});
    if (simplex.back().f - simplex.front().f < options.f_tolerance) {
      result.converged = true;
      result.iterations = iter;
      break;
    }
    if (iter >= options.max_iterations) {
      result.iterations = iter;
      break;
    }

    Point centroid(dim, 0.0);
    for (std::size_t v = 0; v < dim; ++v) {
      for (std::size_t i = 0; i < dim; ++i) centroid[i] += simplex[v].x[i] / static_cast<double>(dim);
    }
    Vertex& worst = simplex.back();
    const double second_worst = simplex[dim - 1].f;
    const double best = simplex.front().f;

    const Point reflected = affine(centroid, worst.x, -1.0);
    const double f_reflected = evaluate(reflected);
    if (f_reflected < best) {
      const Point expanded = affine(centroid, worst.x, -2.0);
      const double f_expanded = evaluate(expanded);
      worst = f_expanded < f_reflected ? Vertex{expanded, f_expanded} : Vertex{reflected, f_reflected};
      continue;
    }
    if (f_reflected < second_worst) {
      worst = {reflected, f_reflected};
      continue;
    }
    bool accepted = false;
    if (f_reflected < worst.f) {
      const Point outside = affine(centroid, reflected, 0.5);
      const double f_outside = evaluate(outside);
      if (f_outside <= f_reflected) {
        worst = {outside, f_outside};
        accepted = true;
      }
    } else {
      const Point inside = affine(centroid, worst.x, 0.5);
      const double f_inside = evaluate(inside);
      if (f_inside < worst.f) {
        worst = {inside, f_inside};
        accepted = true;
      }
    }
    if (!accepted) {
      for (std::size_t v = 1; v <= dim; ++v) simplex[v].x = affine(simplex.front().x, simplex[v].x, 0.5);
      evaluate_batch(simplex, 1);
    }
  }

  result.point = simplex.front().x;
  result.value = simplex.front().f;
  return result;
}

}  // namespace photonchain::optim
