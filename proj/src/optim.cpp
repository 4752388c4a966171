#include "kwseq/optim.hpp"

#include <cmath>
#include <map>

namespace kwseq {

AdamState AdamState::for_parameters(std::span<const NamedTensor> params, AdamOptions options) {
  AdamState state;
  state.options = options;
  for (const NamedTensor& p : params) {
    state.names.push_back(p.name);
    state.first_moment.emplace_back(p.tensor.size(), 0.0);
    state.second_moment.emplace_back(p.tensor.size(), 0.0);
  }
  return state;
}

std::vector<NamedTensor> AdamState::to_tensors() const {
  std::vector<NamedTensor> out;
  out.push_back({"adam.step", Tensor::scalar(static_cast<double>(step))});
  for (std::size_t i = 0; i < names.size(); ++i) {
    out.push_back({"adam.m." + names[i],
                   Tensor(Shape{first_moment[i].size()}, first_moment[i])});
    out.push_back({"adam.v." + names[i],
                   Tensor(Shape{second_moment[i].size()}, second_moment[i])});
  }
  return out;
}

AdamState AdamState::from_tensors(const std::vector<NamedTensor>& tensors, AdamOptions options) {
  std::map<std::string, const Tensor*> by_name;
  for (const NamedTensor& t : tensors) by_name[t.name] = &t.tensor;
  auto step_it = by_name.find("adam.step");
  if (step_it == by_name.end()) throw IoError("optimizer state lacks adam.step");
  AdamState state;
  state.options = options;
  state.step = static_cast<std::uint64_t>(step_it->second->item());
  for (const NamedTensor& t : tensors) {
    if (t.name.rfind("adam.m.", 0) != 0) continue;
    const std::string name = t.name.substr(7);
    auto v = by_name.find("adam.v." + name);
    if (v == by_name.end()) throw IoError("optimizer state lacks adam.v." + name);
    state.names.push_back(name);
    state.first_moment.emplace_back(t.tensor.values().begin(), t.tensor.values().end());
    state.second_moment.emplace_back(v->second->values().begin(), v->second->values().end());
  }
  return state;
}

void adam_step(std::span<const NamedTensor> params, AdamState& state) {
  if (params.size() != state.names.size()) {
    throw InvalidArgument("adam_step: " + std::to_string(params.size()) +
                          " parameters but optimizer tracks " +
                          std::to_string(state.names.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].tensor.size() != state.first_moment[i].size()) {
      throw ShapeError("adam_step: accumulator shape mismatch for " + params[i].name);
    }
    for (double g : params[i].tensor.grad()) {
      if (!std::isfinite(g)) {
        throw NumericError("adam_step: non-finite gradient in parameter " + params[i].name);
      }
    }
  }
  const AdamOptions& o = state.options;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(o.beta1, t);
  const double correction2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor param = params[i].tensor;
    auto w = param.mutable_values();
    auto g = param.grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = o.beta1 * m[j] + (1.0 - o.beta1) * g[j];
      v[j] = o.beta2 * v[j] + (1.0 - o.beta2) * g[j] * g[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      w[j] -= o.learning_rate * m_hat / (std::sqrt(v_hat) + o.epsilon);
    }
  }
}

double clip_grad_norm(std::span<const NamedTensor> params, double max_norm) {
  double sq = 0.0;
  for (const NamedTensor& p : params) {
    for (double g : p.tensor.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (const NamedTensor& p : params) {
      Tensor t = p.tensor;
      for (double& g : t.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

void zero_grads(std::span<const NamedTensor> params) {
  for (const NamedTensor& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

}  // namespace kwseq
