#pragma once

// Flat `key = value` run configuration shared by every CLI command.
// Lines starting with '#' or ';' are comments; unknown keys are errors.

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "capulse/model.hpp"
#include "capulse/series.hpp"
#include "capulse/synth.hpp"

namespace capulse {

/// Parse failure that names the key (or line) at fault.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what) : Error("config key '" + key + "': " + what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct RunConfig {
  TrainConfig train;
  std::size_t score_stride = 1;
  SplitSpec split;
  bool standardize = true;
  std::string data;
  std::string out = "out";
  std::string checkpoint;
  std::string label_column = "label";
  synth::SynthConfig synth;
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, sep)) out.push_back(trim(part));
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError(key, "cannot parse '" + v + "' as a number");
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key, "cannot parse '" + v + "' as a number");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key, "expected true/false, got '" + v + "'");
}

inline std::string format_double(double d) {
  std::ostringstream os;
  os.precision(17);
  os << d;
  return os.str();
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field size_field(T RunConfig::*outer, std::size_t T::*member, const std::string& key) {
  return {[=](RunConfig& c, const std::string& v) { (c.*outer).*member = parse_number<std::size_t>(key, v); },
          [=](const RunConfig& c) { return std::to_string((c.*outer).*member); }};
}

template <typename T>
Field double_field(T RunConfig::*outer, double T::*member, const std::string& key) {
  return {[=](RunConfig& c, const std::string& v) { (c.*outer).*member = parse_double(key, v); },
          [=](const RunConfig& c) { return format_double((c.*outer).*member); }};
}

inline std::string periods_to_string(const std::vector<synth::PeriodComponent>& ps) {
  std::string out;
  for (const auto& p : ps) out += (out.empty() ? "" : ",") + format_double(p.period) + ":" + format_double(p.amplitude);
  return out;
}

inline std::vector<synth::PeriodComponent> parse_periods(const std::string& key, const std::string& v) {
  std::vector<synth::PeriodComponent> out;
  for (const auto& item : split(v, ',')) {
    const auto parts = split(item, ':');
    if (parts.size() != 2) throw ConfigError(key, "expected period:amplitude, got '" + item + "'");
    out.push_back({parse_double(key, parts[0]), parse_double(key, parts[1])});
  }
  if (out.empty()) throw ConfigError(key, "at least one period is required");
  return out;
}

inline std::string anomalies_to_string(const std::vector<synth::AnomalySpec>& as) {
  std::string out;
  for (const auto& a : as)
    out += (out.empty() ? "" : ",") + synth::to_string(a.kind) + ":" + std::to_string(a.start) + ":" +
           std::to_string(a.duration) + ":" + format_double(a.magnitude);
  return out;
}

inline std::vector<synth::AnomalySpec> parse_anomalies(const std::string& key, const std::string& v) {
  std::vector<synth::AnomalySpec> out;
  if (v.empty() || v == "none") return out;
  for (const auto& item : split(v, ',')) {
    const auto parts = split(item, ':');
    if (parts.size() != 4) throw ConfigError(key, "expected kind:start:duration:magnitude, got '" + item + "'");
    synth::AnomalySpec a;
    try {
      a.kind = synth::parse_kind(parts[0]);
    } catch (const Error& e) {
      throw ConfigError(key, e.what());
    }
    a.start = parse_number<std::size_t>(key, parts[1]);
    a.duration = parse_number<std::size_t>(key, parts[2]);
    a.magnitude = parse_double(key, parts[3]);
    out.push_back(a);
  }
  return out;
}

// Ordered so the resolved-config dump is stable.
inline const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = [] {
    using R = RunConfig;
    std::vector<std::pair<std::string, Field>> f;
    f.emplace_back("lr", double_field(&R::train, &TrainConfig::lr, "lr"));
    f.emplace_back("epochs", size_field(&R::train, &TrainConfig::epochs, "epochs"));
    f.emplace_back("batch_size", size_field(&R::train, &TrainConfig::batch_size, "batch_size"));
    f.emplace_back("window", size_field(&R::train, &TrainConfig::window, "window"));
    f.emplace_back("stride", size_field(&R::train, &TrainConfig::stride, "stride"));
    f.emplace_back("alpha", double_field(&R::train, &TrainConfig::alpha, "alpha"));
    f.emplace_back("beta", double_field(&R::train, &TrainConfig::beta, "beta"));
    f.emplace_back("top_k", size_field(&R::train, &TrainConfig::top_k, "top_k"));
    f.emplace_back("slots", size_field(&R::train, &TrainConfig::slots, "slots"));
    f.emplace_back("hidden_dim", size_field(&R::train, &TrainConfig::hidden_dim, "hidden_dim"));
    f.emplace_back("layers", size_field(&R::train, &TrainConfig::layers, "layers"));
    f.emplace_back("blocks", size_field(&R::train, &TrainConfig::blocks, "blocks"));
    f.emplace_back("sigma", double_field(&R::train, &TrainConfig::sigma, "sigma"));
    f.emplace_back("k_h_frac", double_field(&R::train, &TrainConfig::k_h_frac, "k_h_frac"));
    f.emplace_back("noise", Field{[](R& c, const std::string& v) {
                                    try {
                                      c.train.noise = spectral::parse_noise(v);
                                    } catch (const Error& e) {
                                      throw ConfigError("noise", e.what());
                                    }
                                  },
                                  [](const R& c) { return spectral::to_string(c.train.noise); }});
    f.emplace_back("location", Field{[](R& c, const std::string& v) {
                                       try {
                                         c.train.location = spectral::parse_band(v);
                                       } catch (const Error& e) {
                                         throw ConfigError("location", e.what());
                                       }
                                     },
                                     [](const R& c) { return spectral::to_string(c.train.location); }});
    f.emplace_back("seed", Field{[](R& c, const std::string& v) { c.train.seed = parse_number<std::uint64_t>("seed", v); },
                                 [](const R& c) { return std::to_string(c.train.seed); }});
    f.emplace_back("patience", size_field(&R::train, &TrainConfig::patience, "patience"));
    f.emplace_back("pc_mask", Field{[](R& c, const std::string& v) { c.train.pc_mask = parse_bool("pc_mask", v); },
                                    [](const R& c) { return std::string(c.train.pc_mask ? "true" : "false"); }});
    f.emplace_back("score_stride",
                   Field{[](R& c, const std::string& v) { c.score_stride = parse_number<std::size_t>("score_stride", v); },
                         [](const R& c) { return std::to_string(c.score_stride); }});
    f.emplace_back("train_frac", double_field(&R::split, &SplitSpec::train_frac, "train_frac"));
    f.emplace_back("val_frac", double_field(&R::split, &SplitSpec::val_frac, "val_frac"));
    f.emplace_back("test_frac", double_field(&R::split, &SplitSpec::test_frac, "test_frac"));
    f.emplace_back("standardize", Field{[](R& c, const std::string& v) { c.standardize = parse_bool("standardize", v); },
                                        [](const R& c) { return std::string(c.standardize ? "true" : "false"); }});
    f.emplace_back("data", Field{[](R& c, const std::string& v) { c.data = v; }, [](const R& c) { return c.data; }});
    f.emplace_back("out", Field{[](R& c, const std::string& v) { c.out = v; }, [](const R& c) { return c.out; }});
    f.emplace_back("checkpoint",
                   Field{[](R& c, const std::string& v) { c.checkpoint = v; }, [](const R& c) { return c.checkpoint; }});
    f.emplace_back("label_column", Field{[](R& c, const std::string& v) { c.label_column = v; },
                                         [](const R& c) { return c.label_column; }});
    f.emplace_back("synth.length", size_field(&R::synth, &synth::SynthConfig::length, "synth.length"));
    f.emplace_back("synth.dims", size_field(&R::synth, &synth::SynthConfig::dims, "synth.dims"));
    f.emplace_back("synth.periods",
                   Field{[](R& c, const std::string& v) { c.synth.periods = parse_periods("synth.periods", v); },
                         [](const R& c) { return periods_to_string(c.synth.periods); }});
    f.emplace_back("synth.noise_std", double_field(&R::synth, &synth::SynthConfig::noise_std, "synth.noise_std"));
    f.emplace_back("synth.anomalies",
                   Field{[](R& c, const std::string& v) { c.synth.anomalies = parse_anomalies("synth.anomalies", v); },
                         [](const R& c) { return anomalies_to_string(c.synth.anomalies); }});
    return f;
  }();
  return table;
}

}  // namespace config_detail

/// Apply one `key=value` assignment.
inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  const auto& f = config_detail::fields();
  const auto it = std::find_if(f.begin(), f.end(), [&](const auto& kv) { return kv.first == key; });
  if (it == f.end()) throw ConfigError(key, "unknown key");
  it->second.set(c, config_detail::trim(value));
}

/// Parse an override of the form `key=value`.
inline void apply_override(RunConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError(config_detail::trim(assignment), "override must be key=value");
  set_config_value(c, config_detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

inline void parse_config_text(RunConfig& c, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = config_detail::trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(t, "line " + std::to_string(lineno) + " is not a key = value assignment");
    set_config_value(c, config_detail::trim(t.substr(0, eq)), t.substr(eq + 1));
  }
}

inline void load_config_file(RunConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  parse_config_text(c, ss.str());
}

inline std::string dump_config(const RunConfig& c) {
  std::string out;
  for (const auto& [key, field] : config_detail::fields()) out += key + " = " + field.get(c) + "\n";
  return out;
}

inline void write_config(const RunConfig& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << dump_config(c);
}

}  // namespace capulse
