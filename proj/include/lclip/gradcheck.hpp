#pragma once

#include <algorithm>
#include <functional>
#include <vector>

#include "lclip/param.hpp"

namespace lclip {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Central-difference gradient audit. The loss builder must construct the loss
// graph from whatever param values currently sit in storage; it is evaluated
// twice at the base point to catch non-determinism before anything else.
// Relative error uses denominator max(|analytic|, |numeric|, 1e-8).
//
// hi_eval, when given, re-evaluates the loss at the current param storage
// with extra floating-point headroom (a wider-precision mirror of the same
// model). The difference quotient needs that headroom: coordinates whose true
// gradient sits just above the denominator floor are otherwise drowned by the
// ulp noise of f itself. Perturbed values are bit-exact in both precisions,
// so the quotient still measures the checked model's own derivative.
template <class T>
double finite_diff_check(const std::function<ad::Var<T>(Graph<T>&)>& loss_builder,
                         const std::vector<ParamT<T>*>& params, T eps,
                         GradCheckReport* report = nullptr,
                         const std::function<long double()>& hi_eval = {}) {
  if (!(eps > T(0))) throw PreconditionError("finite_diff_check: eps must be > 0");

  auto eval = [&]() -> long double {
    if (hi_eval) return hi_eval();
    Graph<T> g(Graph<T>::Mode::inference);
    return static_cast<long double>(loss_builder(g)->value.item());
  };

  {
    Graph<T> g0(Graph<T>::Mode::inference), g1(Graph<T>::Mode::inference);
    const T f0 = loss_builder(g0)->value.item();
    const T f1 = loss_builder(g1)->value.item();
    if (!(f0 == f1))
      throw DeterminismError("finite_diff_check: loss_fn is non-deterministic (" +
                             std::to_string(static_cast<double>(f0)) + " vs " +
                             std::to_string(static_cast<double>(f1)) + ")");
    if (hi_eval && !(hi_eval() == hi_eval()))
      throw DeterminismError("finite_diff_check: hi_eval is non-deterministic");
  }

  zero_grads(params);
  {
    Graph<T> g(Graph<T>::Mode::train);
    g.backward(loss_builder(g));
  }

  double max_rel = 0.0;
  for (auto* p : params) {
    if (!p->receives_grad()) continue;
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      const T saved = p->value[i];
      p->value[i] = saved + eps;
      const long double fp = eval();
      p->value[i] = saved - eps;
      const long double fm = eval();
      p->value[i] = saved;
      const double numeric =
          static_cast<double>((fp - fm) / (2.0L * static_cast<long double>(eps)));
      const double analytic = static_cast<double>(p->grad[i]);
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic - numeric) / denom;
      if (rel > max_rel) {
        max_rel = rel;
        if (report) {
          report->worst_param = p->name;
          report->worst_index = i;
          report->worst_analytic = analytic;
          report->worst_numeric = numeric;
        }
      }
    }
  }
  if (report) report->max_rel_error = max_rel;
  return max_rel;
}

}  // namespace lclip
