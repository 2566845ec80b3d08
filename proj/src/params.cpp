#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "siq/ingest.hpp"
#include "siq/nn.hpp"

namespace siq::nn {

void ParamSet::add(const std::string& name, Tensor value) {
  if (params_.contains(name)) throw std::invalid_argument("duplicate parameter " + name);
  Parameter p;
  p.first_moment = Tensor(value.shape());
  p.second_moment = Tensor(value.shape());
  p.value = std::move(value);
  params_.emplace(name, std::move(p));
}

const Parameter& ParamSet::parameter(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter " + name);
  return it->second;
}

Parameter& ParamSet::parameter(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter " + name);
  return it->second;
}

const Tensor& ParamSet::value(const std::string& name) const { return parameter(name).value; }
Tensor& ParamSet::value(const std::string& name) { return parameter(name).value; }

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.value.size();
  return n;
}

std::vector<std::string> ParamSet::names() const {
  std::vector<std::string> out;
  for (const auto& [name, p] : params_) out.push_back(name);
  return out;
}

void adam_step(ParamSet& params, const Gradients& grads, const AdamOptions& options) {
  for (const auto& [name, g] : grads) {
    if (!params.contains(name)) throw std::invalid_argument("gradient for unknown parameter " + name);
    if (!params.value(name).same_shape(g)) shape_error("adam_step", params.value(name), g);
  }
  for (auto& [name, p] : params) {
    auto it = grads.find(name);
    const Tensor* g = it == grads.end() ? nullptr : &it->second;
    ++p.step;
    const double t = static_cast<double>(p.step);
    const double correction1 = 1.0 - std::pow(options.beta1, t);
    const double correction2 = 1.0 - std::pow(options.beta2, t);
    auto value = p.value.values();
    auto m = p.first_moment.values();
    auto v = p.second_moment.values();
    for (std::size_t i = 0; i < value.size(); ++i) {
      double grad = g ? g->values()[i] : 0.0;
      if (!options.decoupled_weight_decay) grad += options.weight_decay * value[i];
      m[i] = options.beta1 * m[i] + (1.0 - options.beta1) * grad;
      v[i] = options.beta2 * v[i] + (1.0 - options.beta2) * grad * grad;
      double m_hat = m[i] / correction1;
      double v_hat = v[i] / correction2;
      if (options.decoupled_weight_decay) value[i] -= options.lr * options.weight_decay * value[i];
      value[i] -= options.lr * m_hat / (std::sqrt(v_hat) + options.eps);
    }
  }
}

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor w({fan_in, fan_out});
  for (double& v : w.values()) v = rng.uniform(-limit, limit);
  return w;
}

std::string params_to_json(const ParamSet& params) {
  nlohmann::json doc;
  doc["schema"] = "siq.params/1";
  doc["params"] = nlohmann::json::object();
  for (const auto& [name, p] : params) {
    doc["params"][name] = {{"shape", p.value.shape()},
                           {"values", std::vector<double>(p.value.values().begin(),
                                                          p.value.values().end())}};
  }
  return doc.dump();
}

ParamSet params_from_json(const std::string& text) {
  auto doc = nlohmann::json::parse(text);
  if (doc.value("schema", "") != "siq.params/1") {
    throw std::runtime_error("checkpoint schema is not siq.params/1");
  }
  ParamSet params;
  for (const auto& [name, entry] : doc.at("params").items()) {
    params.add(name, Tensor(entry.at("shape").get<std::vector<std::size_t>>(),
                            entry.at("values").get<std::vector<double>>()));
  }
  return params;
}

void save_params(const ParamSet& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << params_to_json(params) << '\n';
}

ParamSet load_params(const std::filesystem::path& path) {
  return params_from_json(ingest::read_file(path));
}

}  // namespace siq::nn
