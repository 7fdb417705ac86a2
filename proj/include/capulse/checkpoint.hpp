#pragma once

// Versioned JSON checkpoint. Each parameter tensor is stored by name together
// with its shape and Adam moments; model-level metadata sits beside them.

#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "capulse/model.hpp"

namespace capulse {

inline constexpr const char* kCheckpointFormat = "capulse-checkpoint";
inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json config_to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"window", c.window},
          {"stride", c.stride},
          {"alpha", c.alpha},
          {"beta", c.beta},
          {"top_k", c.top_k},
          {"slots", c.slots},
          {"hidden_dim", c.hidden_dim},
          {"layers", c.layers},
          {"blocks", c.blocks},
          {"sigma", c.sigma},
          {"k_h_frac", c.k_h_frac},
          {"noise", spectral::to_string(c.noise)},
          {"location", spectral::to_string(c.location)},
          {"seed", c.seed},
          {"patience", c.patience},
          {"pc_mask", c.pc_mask}};
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.lr = j.at("lr").get<double>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.window = j.at("window").get<std::size_t>();
  c.stride = j.at("stride").get<std::size_t>();
  c.alpha = j.at("alpha").get<double>();
  c.beta = j.at("beta").get<double>();
  c.top_k = j.at("top_k").get<std::size_t>();
  c.slots = j.at("slots").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.blocks = j.at("blocks").get<std::size_t>();
  c.sigma = j.at("sigma").get<double>();
  c.k_h_frac = j.at("k_h_frac").get<double>();
  c.noise = spectral::parse_noise(j.at("noise").get<std::string>());
  c.location = spectral::parse_band(j.at("location").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  c.patience = j.at("patience").get<std::size_t>();
  c.pc_mask = j.at("pc_mask").get<bool>();
  return c;
}

inline nlohmann::json to_json(const Model& m) {
  nlohmann::json params = nlohmann::json::object();
  for (std::size_t i = 0; i < m.store.size(); ++i) {
    const auto& p = m.store.at(i);
    params[p.name] = {{"shape", p.value.shape()}, {"data", p.value.raw()}, {"adam_m", p.m.raw()}, {"adam_v", p.v.raw()}};
  }
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"config", config_to_json(m.config)},
          {"input_dim", m.input_dim},
          {"global_period", m.global_period},
          {"mask_period", m.mask.period()},
          {"standardization", {{"mean", m.standardization.mean}, {"std", m.standardization.stddev}}},
          {"optimizer_step", m.store.step()},
          {"params", params}};
}

/// Rebuild a model. Tensor names and shapes must match the config exactly.
inline Model from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat) throw Error("checkpoint: unrecognised format");
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw Error("checkpoint: unsupported version " + std::to_string(j.at("version").get<int>()));
    Model m = init_model(config_from_json(j.at("config")), j.at("input_dim").get<std::size_t>(),
                         j.at("global_period").get<std::size_t>());
    if (m.mask.period() != j.at("mask_period").get<std::size_t>()) throw Error("checkpoint: mask period mismatch");
    m.standardization.mean = j.at("standardization").at("mean").get<std::vector<double>>();
    m.standardization.stddev = j.at("standardization").at("std").get<std::vector<double>>();
    if (m.standardization.mean.size() != m.input_dim || m.standardization.stddev.size() != m.input_dim)
      throw Error("checkpoint: standardization does not match input_dim");
    const auto& params = j.at("params");
    if (params.size() != m.store.size())
      throw Error("checkpoint: expected " + std::to_string(m.store.size()) + " tensors, found " +
                  std::to_string(params.size()));
    for (std::size_t i = 0; i < m.store.size(); ++i) {
      auto& p = m.store.at(i);
      if (!params.contains(p.name)) throw Error("checkpoint: missing tensor '" + p.name + "'");
      const auto& e = params.at(p.name);
      const auto shape = e.at("shape").get<numeric::Shape>();
      if (shape != p.value.shape())
        throw Error("checkpoint: tensor '" + p.name + "' has shape " + numeric::shape_str(shape) + ", model expects " +
                    numeric::shape_str(p.value.shape()));
      p.value = numeric::Tensor(shape, e.at("data").get<std::vector<double>>());
      p.m = numeric::Tensor(shape, e.at("adam_m").get<std::vector<double>>());
      p.v = numeric::Tensor(shape, e.at("adam_v").get<std::vector<double>>());
    }
    m.store.set_step(j.at("optimizer_step").get<long>());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const Model& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << to_json(m).dump() << '\n';
  if (!out) throw Error("failed writing '" + path + "'");
}

inline Model load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("checkpoint '" + path + "': " + e.what());
  }
  return from_json(j);
}

}  // namespace capulse
