#pragma once

#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "qrn/tape.hpp"

namespace qrn {

template <class T>
struct GradCheckReport {
  std::string name;
  T max_rel_err = T(0);
  std::size_t worst_index = 0;
  T analytic = T(0);
  T numeric = T(0);
};

/// Compare reverse-mode gradients against central finite differences for
/// every entry of every listed parameter. build_loss must construct the
/// scalar loss from the parameters' current values each time it is called.
/// Two no-grad evaluations are compared bitwise first; any mismatch is a
/// DeterminismError.
template <class T>
std::vector<GradCheckReport<T>> check_gradients(
    const std::function<VarPtr<T>(Tape<T>&)>& build_loss,
    const std::vector<Parameter<T>*>& params,
    T step = T(1e-5)) {
  auto eval = [&]() -> T {
    Tape<T> tape;
    tape.set_recording(false);
    auto loss = build_loss(tape);
    if (!loss || loss->value.size() != 1)
      throw ContractError("gradient check requires a scalar loss");
    return loss->value[0];
  };

  const T v1 = eval();
  const T v2 = eval();
  if (std::memcmp(&v1, &v2, sizeof(T)) != 0)
    throw DeterminismError("loss closure is not deterministic");

  for (auto* p : params) p->zero_gradient();
  {
    Tape<T> tape;
    auto loss = build_loss(tape);
    tape.backward(loss);
  }

  std::vector<GradCheckReport<T>> reports;
  reports.reserve(params.size());
  for (auto* p : params) {
    GradCheckReport<T> rep;
    rep.name = p->name;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const T saved = p->value[i];
      p->value[i] = saved + step;
      const T plus = eval();
      p->value[i] = saved - step;
      const T minus = eval();
      p->value[i] = saved;
      const T numeric = (plus - minus) / (T(2) * step);
      const T analytic = p->gradient[i];
      const T denom = std::max({std::abs(analytic), std::abs(numeric), T(1e-6)});
      const T rel = std::abs(analytic - numeric) / denom;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_index = i;
        rep.analytic = analytic;
        rep.numeric = numeric;
      }
    }
    reports.push_back(rep);
  }
  return reports;
}

template <class T>
T worst_rel_err(const std::vector<GradCheckReport<T>>& reports) {
  T worst = T(0);
  for (const auto& r : reports) worst = std::max(worst, r.max_rel_err);
  return worst;
}

}  // namespace qrn
