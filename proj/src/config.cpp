#include "estformer/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <type_traits>

namespace estformer {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  const auto fail = [&]() -> ConfigError { return ConfigError("config key '" + key + "': cannot parse '" + text + "'"); };
  if constexpr (std::is_same_v<T, std::string>) {
    if (text.empty()) throw fail();
    return text;
  } else if constexpr (std::is_same_v<T, bool>) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw fail();
  } else {
    T v{};
    if constexpr (std::is_unsigned_v<T>) {
      if (!text.empty() && text.front() == '-') throw fail();
    }
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) throw fail();
    return v;
  }
}

template <typename T>
std::string format_value(const T& v) {
  if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
  }
}

struct Entry {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(RunConfig&)> get;
};

using Table = std::vector<std::pair<std::string, Entry>>;

template <typename Access>
Entry entry(const std::string& key, Access access) {
  using T = std::remove_reference_t<decltype(access(std::declval<RunConfig&>()))>;
  return {[key, access](RunConfig& c, const std::string& v) { access(c) = parse_value<T>(key, v); },
          [access](RunConfig& c) { return format_value<T>(access(c)); }};
}

#define ESTF_KEY(name, expr) \
  { name, entry(name, [](RunConfig& c) -> auto& { return expr; }) }

const Table& table() {
  static const Table t = {
      ESTF_KEY("montage", c.montage),
      ESTF_KEY("sample_rate", c.sample_rate),
      ESTF_KEY("window_seconds", c.window_seconds),
      ESTF_KEY("n_windows", c.n_windows),
      ESTF_KEY("train_frac", c.train_frac),
      ESTF_KEY("split_seed", c.split_seed),
      ESTF_KEY("n_sources", c.synth.n_sources),
      ESTF_KEY("delta_amp_min", c.synth.band_amplitude[0].first),
      ESTF_KEY("delta_amp_max", c.synth.band_amplitude[0].second),
      ESTF_KEY("theta_amp_min", c.synth.band_amplitude[1].first),
      ESTF_KEY("theta_amp_max", c.synth.band_amplitude[1].second),
      ESTF_KEY("alpha_amp_min", c.synth.band_amplitude[2].first),
      ESTF_KEY("alpha_amp_max", c.synth.band_amplitude[2].second),
      ESTF_KEY("beta_amp_min", c.synth.band_amplitude[3].first),
      ESTF_KEY("beta_amp_max", c.synth.band_amplitude[3].second),
      ESTF_KEY("gamma_amp_min", c.synth.band_amplitude[4].first),
      ESTF_KEY("gamma_amp_max", c.synth.band_amplitude[4].second),
      ESTF_KEY("noise_std", c.synth.noise_std),
      ESTF_KEY("noise_ar", c.synth.noise_ar),
      ESTF_KEY("n_classes", c.synth.n_classes),
      ESTF_KEY("class_scale", c.synth.class_scale),
      ESTF_KEY("amplitude_jitter", c.synth.amplitude_jitter),
      ESTF_KEY("kappa", c.synth.kappa),
      ESTF_KEY("data_seed", c.synth.seed),
      ESTF_KEY("scale", c.scale),
      ESTF_KEY("mask_case", c.mask_case),
      ESTF_KEY("alpha_s", c.model.alpha_s),
      ESTF_KEY("alpha_t", c.model.alpha_t),
      ESTF_KEY("r_mlp", c.model.r_mlp),
      ESTF_KEY("l_s", c.model.l_s),
      ESTF_KEY("l_t", c.model.l_t),
      ESTF_KEY("ln_eps", c.model.ln_eps),
      ESTF_KEY("position_scale", c.model.position_scale),
      ESTF_KEY("init_std", c.model.init_std),
      ESTF_KEY("cab_outer_residual", c.model.cab_outer_residual),
      ESTF_KEY("init_seed", c.init_seed),
      ESTF_KEY("batch_size", c.train.batch_size),
      ESTF_KEY("lr", c.train.lr),
      ESTF_KEY("beta1", c.train.beta1),
      ESTF_KEY("beta2", c.train.beta2),
      ESTF_KEY("weight_decay", c.train.weight_decay),
      ESTF_KEY("dropout", c.train.dropout),
      ESTF_KEY("adam_eps", c.train.eps),
      ESTF_KEY("epochs", c.train.epochs),
      ESTF_KEY("seed", c.train.seed),
      ESTF_KEY("clip_norm", c.train.clip_norm),
      ESTF_KEY("log_wall_time", c.train.log_wall_time),
      ESTF_KEY("an_k", c.an_k),
      ESTF_KEY("spline_m", c.spline.m),
      ESTF_KEY("spline_terms", c.spline.n_terms),
      ESTF_KEY("spline_lambda", c.spline.lambda),
      ESTF_KEY("feature", c.feature),
      ESTF_KEY("clf_hidden_band", c.classifier.hidden_band),
      ESTF_KEY("clf_hidden_channel", c.classifier.hidden_channel),
      ESTF_KEY("clf_epochs", c.classifier.epochs),
      ESTF_KEY("clf_batch_size", c.classifier.batch_size),
      ESTF_KEY("clf_lr", c.classifier.lr),
      ESTF_KEY("clf_weight_decay", c.classifier.weight_decay),
      ESTF_KEY("clf_train_frac", c.classifier.train_frac),
      ESTF_KEY("clf_seed", c.classifier.seed),
  };
  return t;
}

#undef ESTF_KEY

}  // namespace

void RunConfig::validate() const {
  try {
    if (!(sample_rate > 0.0)) throw ConfigError("sample_rate must be positive");
    if (!(window_seconds > 0.0)) throw ConfigError("window_seconds must be positive");
    if (n_windows < 2) throw ConfigError("n_windows must be at least 2");
    if (!(train_frac > 0.0 && train_frac < 1.0)) throw ConfigError("train_frac must be in (0, 1)");
    if (scale != 2 && scale != 4 && scale != 8) throw ConfigError("scale must be 2, 4 or 8");
    if (mask_case < 1 || mask_case > 4) throw ConfigError("mask_case must be 1..4");
    if (an_k == 0) throw ConfigError("an_k must be positive");
    parse_feature_kind(feature);
    synth.validate();
    model.validate();
    train.validate();
    spline.validate();
    classifier.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig c;
  std::map<std::string, const Entry*> lookup;
  for (const auto& [k, e] : table()) lookup[k] = &e;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = lookup.find(key);
    if (it == lookup.end()) throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    if (auto [pos, fresh] = seen.emplace(key, line_no); !fresh) {
      throw ConfigError("config line " + std::to_string(line_no) + ": key '" + key + "' already set on line " +
                        std::to_string(pos->second));
    }
    it->second->set(c, value);
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str());
}

std::string format_run_config(const RunConfig& c) {
  RunConfig copy = c;
  std::ostringstream os;
  for (const auto& [k, e] : table()) os << k << " = " << e.get(copy) << '\n';
  return os.str();
}

void save_run_config(const RunConfig& c, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write config file " + path.string());
  f << format_run_config(c);
}

std::vector<std::string> run_config_keys() {
  std::vector<std::string> out;
  for (const auto& [k, e] : table()) out.push_back(k);
  return out;
}

}  // namespace estformer
