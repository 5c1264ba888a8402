#include "flowfuse/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "flowfuse/errors.hpp"

namespace flowfuse {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("config: bad value '" + text + "' for " + key);
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError("config: bad boolean '" + text + "' for " + key);
}

std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw ConfigError("config: empty list entry for " + key);
    out.push_back(parse_number<double>(key, item.substr(b, e - b + 1)));
  }
  return out;
}

struct Key {
  std::string name;  // section.key
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define FF_NUM(NAME, FIELD, TYPE)                                                        \
  Key {                                                                                  \
    NAME, [](const RunConfig& c) { return fmt_num(c.FIELD); },                           \
        [](RunConfig& c, const std::string& s) { c.FIELD = parse_number<TYPE>(NAME, s); } \
  }
#define FF_BOOL(NAME, FIELD)                                                   \
  Key {                                                                        \
    NAME, [](const RunConfig& c) { return std::string(c.FIELD ? "true" : "false"); }, \
        [](RunConfig& c, const std::string& s) { c.FIELD = parse_bool(NAME, s); }     \
  }
#define FF_STR(NAME, FIELD)                                                     \
  Key {                                                                         \
    NAME, [](const RunConfig& c) { return c.FIELD; },                           \
        [](RunConfig& c, const std::string& s) { c.FIELD = s; }                 \
  }

std::string fmt_num(double v) { return fmt_double(v); }
std::string fmt_num(int v) { return std::to_string(v); }
std::string fmt_num(std::uint64_t v) { return std::to_string(v); }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      FF_STR("estimator.name", estimator.name),
      FF_NUM("estimator.hs_alpha", estimator.hs.alpha, double),
      FF_NUM("estimator.hs_iterations", estimator.hs.iterations, int),
      FF_NUM("estimator.hs_levels", estimator.hs.pyramid_levels, int),
      FF_NUM("estimator.hs_warps", estimator.hs.warps_per_level, int),
      FF_NUM("estimator.lk_radius", estimator.lk.window_radius, int),
      FF_NUM("estimator.lk_levels", estimator.lk.pyramid_levels, int),
      FF_NUM("estimator.lk_iterations", estimator.lk.iterations_per_level, int),
      FF_NUM("estimator.lk_min_eigen", estimator.lk.min_eigen_threshold, double),
      FF_STR("estimator.precomputed_dir", estimator.precomputed_dir),
      FF_STR("estimator.precomputed_pattern", estimator.precomputed_pattern),

      FF_BOOL("fusion.include_image", fusion.include_image),
      FF_BOOL("fusion.include_brightness_errors", fusion.include_brightness_errors),
      FF_BOOL("fusion.include_magnitude", fusion.include_magnitude),

      Key{"train.alpha_levels",
          [](const RunConfig& c) {
            std::string s;
            for (double a : c.train.alpha_levels) s += (s.empty() ? "" : ",") + fmt_double(a);
            return s;
          },
          [](RunConfig& c, const std::string& s) {
            c.train.alpha_levels = parse_list("train.alpha_levels", s);
          }},
      FF_NUM("train.epsilon", train.epsilon, double),
      FF_NUM("train.q", train.q, double),
      FF_NUM("train.gamma", train.gamma, double),
      FF_NUM("train.learning_rate", train.learning_rate, double),
      FF_NUM("train.batch_size", train.batch_size, int),
      FF_NUM("train.steps", train.steps, int),
      FF_NUM("train.seed", train.seed, std::uint64_t),
      FF_NUM("train.crop_size", train.crop_size, int),
      Key{"train.norm",
          [](const RunConfig& c) {
            return std::string(c.train.norm == nn::FlowNorm::kL1 ? "l1" : "l2");
          },
          [](RunConfig& c, const std::string& s) {
            if (s == "l1") {
              c.train.norm = nn::FlowNorm::kL1;
            } else if (s == "l2") {
              c.train.norm = nn::FlowNorm::kL2;
            } else {
              throw ConfigError("config: train.norm must be l1 or l2, got '" + s + "'");
            }
          }},

      FF_STR("data.root", data.root),
      FF_NUM("data.sequences", data.sequences, int),
      FF_NUM("data.split_ratio", data.split_ratio, double),
      FF_NUM("data.seed", data.seed, std::uint64_t),
      FF_NUM("data.width", data.scene.width, int),
      FF_NUM("data.height", data.scene.height, int),
      FF_NUM("data.frames", data.scene.frames, int),
      FF_NUM("data.channels", data.scene.channels, int),
      FF_NUM("data.min_layers", data.scene.min_layers, int),
      FF_NUM("data.max_layers", data.scene.max_layers, int),
      FF_NUM("data.max_speed", data.scene.max_speed, double),
      FF_NUM("data.max_background_speed", data.scene.max_background_speed, double),
      FF_NUM("data.abrupt_fraction", data.scene.abrupt_fraction, double),
      FF_NUM("data.texture_smoothing", data.scene.texture_smoothing, int),

      FF_NUM("metrics.agree_threshold", metrics.agree_threshold, double),
      FF_NUM("metrics.match_threshold", metrics.match_threshold, double),
      FF_NUM("metrics.comparison_margin", metrics.comparison_margin, double),

      FF_STR("output.dir", output_dir),
  };
  return table;
}

#undef FF_NUM
#undef FF_BOOL
#undef FF_STR

void apply(RunConfig& cfg, const std::string& name, const std::string& value) {
  for (const Key& k : keys()) {
    if (k.name == name) {
      k.set(cfg, value);
      return;
    }
  }
  throw ConfigError("config: unknown key '" + name + "'");
}

}  // namespace

RunConfig RunConfig::load(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
  RunConfig cfg;
  if (!file.empty()) {
    boost::property_tree::ptree tree;
    try {
      boost::property_tree::ini_parser::read_ini(file.string(), tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError("config: " + std::string(e.what()));
    }
    for (const auto& [section, body] : tree) {
      if (body.empty()) throw ConfigError("config: key '" + section + "' outside any section");
      for (const auto& [key, value] : body) apply(cfg, section + "." + key, value.data());
    }
  }
  for (const std::string& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("config: override '" + o + "' lacks '='");
    apply(cfg, o.substr(0, eq), o.substr(eq + 1));
  }
  cfg.estimator.hs.validate();
  cfg.estimator.lk.validate();
  cfg.train.validate();
  if (cfg.data.sequences < 1) throw ConfigError("config: data.sequences must be positive");
  if (cfg.data.split_ratio < 0.0 || cfg.data.split_ratio > 1.0) {
    throw ConfigError("config: data.split_ratio must lie in [0, 1]");
  }
  const synth::SceneOptions& s = cfg.data.scene;
  if (s.width < 8 || s.height < 8) throw ConfigError("config: data.width and data.height must be at least 8");
  if (s.frames < 3) throw ConfigError("config: data.frames must be at least 3");
  if (s.channels != 1 && s.channels != 3) throw ConfigError("config: data.channels must be 1 or 3");
  if (s.min_layers < 0 || s.max_layers < s.min_layers) {
    throw ConfigError("config: need 0 <= data.min_layers <= data.max_layers");
  }
  if (s.abrupt_fraction < 0.0 || s.abrupt_fraction > 1.0) {
    throw ConfigError("config: data.abrupt_fraction must lie in [0, 1]");
  }
  if (s.texture_smoothing < 0) throw ConfigError("config: data.texture_smoothing must be >= 0");
  return cfg;
}

std::string RunConfig::to_ini() const {
  std::ostringstream out;
  std::string section;
  for (const Key& k : keys()) {
    const auto dot = k.name.find('.');
    const std::string s = k.name.substr(0, dot);
    if (s != section) {
      if (!section.empty()) out << '\n';
      out << '[' << s << "]\n";
      section = s;
    }
    out << k.name.substr(dot + 1) << " = " << k.get(*this) << '\n';
  }
  return out.str();
}

void RunConfig::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::kIo, "cannot write " + path.string());
  out << to_ini();
}

std::unique_ptr<TwoFrameEstimator> make_estimator(const EstimatorConfig& cfg) {
  if (cfg.name == "hs") return std::make_unique<HornSchunckEstimator>(cfg.hs);
  if (cfg.name == "lk") return std::make_unique<LucasKanadeEstimator>(cfg.lk);
  if (cfg.name == "precomputed") {
    if (cfg.precomputed_dir.empty()) throw ConfigError("config: estimator.precomputed_dir is empty");
    return precomputed_source(cfg.precomputed_dir, cfg.precomputed_pattern);
  }
  if (cfg.name == "gt") return nullptr;
  throw ConfigError("config: unknown estimator '" + cfg.name + "'");
}

}  // namespace flowfuse
