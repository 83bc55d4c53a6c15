#include "nvs/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "nvs/errors.hpp"

namespace nvs {

void RunConfig::validate() const {
  view.validate();
  depth.validate();
  weights.validate();
  if (steps < 1 || batch < 1 || depth_steps < 0 || depth_batch < 1 || neighbors < 1) {
    throw ValidationError("steps, batch sizes and neighbour count must be positive");
  }
  if (checkpoint_every < 1) throw ValidationError("checkpoint_every must be positive");
  if (!(optim.lr > 0) || !(disc_lr > 0) || !(depth_lr > 0)) {
    throw ValidationError("learning rates must be positive");
  }
  if (optim.beta1 < 0 || optim.beta1 >= 1 || optim.beta2 < 0 || optim.beta2 >= 1) {
    throw ValidationError("betas must lie in [0,1)");
  }
  if (optim.warmup_fraction < 0 || optim.warmup_fraction > 1 || optim.weight_decay < 0) {
    throw ValidationError("warmup_fraction must lie in [0,1] and weight_decay be >= 0");
  }
  if (identity_fraction < 0 || identity_fraction > 1) {
    throw ValidationError("identity_fraction must lie in [0,1]");
  }
  if (disc_width < 1 || depth_extra_scenes < 0) throw ValidationError("bad disc_width or scene count");
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

template <typename T>
T parse_number(const std::string& v) {
  std::size_t used = 0;
  T out{};
  if constexpr (std::is_same_v<T, int>) {
    out = std::stoi(v, &used);
  } else if constexpr (std::is_same_v<T, std::uint64_t>) {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    out = std::stoull(v, &used);
  } else {
    out = std::stod(v, &used);
  }
  if (used != v.size()) throw std::invalid_argument(v);
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument(v);
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto num = [&](const char* k, auto member) {
      t[k] = [member](RunConfig& c, const std::string& v) {
        auto& ref = member(c);
        ref = parse_number<std::remove_reference_t<decltype(ref)>>(v);
      };
    };
    num("image_size", [](RunConfig& c) -> int& { return c.view.image_size; });
    num("channels", [](RunConfig& c) -> int& { return c.view.channels; });
    num("encoder_blocks", [](RunConfig& c) -> int& { return c.view.encoder_blocks; });
    num("renderer_blocks", [](RunConfig& c) -> int& { return c.view.renderer_blocks; });
    num("window", [](RunConfig& c) -> int& { return c.view.window; });
    num("inducing", [](RunConfig& c) -> int& { return c.view.inducing; });
    num("heads", [](RunConfig& c) -> int& { return c.view.heads; });
    num("min_depth", [](RunConfig& c) -> double& { return c.depth.min_depth; });
    num("max_depth", [](RunConfig& c) -> double& { return c.depth.max_depth; });
    num("alpha", [](RunConfig& c) -> double& { return c.weights.alpha; });
    num("lambda_smooth", [](RunConfig& c) -> double& { return c.weights.smooth; });
    num("lambda_perceptual", [](RunConfig& c) -> double& { return c.weights.perceptual; });
    num("lambda_adv", [](RunConfig& c) -> double& { return c.weights.adversarial; });
    num("lambda_in", [](RunConfig& c) -> double& { return c.weights.ts_in; });
    num("lambda_out", [](RunConfig& c) -> double& { return c.weights.ts_out; });
    num("lr", [](RunConfig& c) -> double& { return c.optim.lr; });
    num("beta1", [](RunConfig& c) -> double& { return c.optim.beta1; });
    num("beta2", [](RunConfig& c) -> double& { return c.optim.beta2; });
    num("weight_decay", [](RunConfig& c) -> double& { return c.optim.weight_decay; });
    num("warmup_fraction", [](RunConfig& c) -> double& { return c.optim.warmup_fraction; });
    num("disc_lr", [](RunConfig& c) -> double& { return c.disc_lr; });
    num("disc_width", [](RunConfig& c) -> int& { return c.disc_width; });
    num("steps", [](RunConfig& c) -> int& { return c.steps; });
    num("batch", [](RunConfig& c) -> int& { return c.batch; });
    num("seed", [](RunConfig& c) -> std::uint64_t& { return c.seed; });
    num("checkpoint_every", [](RunConfig& c) -> int& { return c.checkpoint_every; });
    num("identity_fraction", [](RunConfig& c) -> double& { return c.identity_fraction; });
    num("depth_steps", [](RunConfig& c) -> int& { return c.depth_steps; });
    num("depth_batch", [](RunConfig& c) -> int& { return c.depth_batch; });
    num("depth_lr", [](RunConfig& c) -> double& { return c.depth_lr; });
    num("neighbors", [](RunConfig& c) -> int& { return c.neighbors; });
    num("depth_extra_scenes", [](RunConfig& c) -> int& { return c.depth_extra_scenes; });
    t["ts_detach"] = [](RunConfig& c, const std::string& v) { c.ts_detach = parse_bool(v); };
    t["depth_widths"] = [](RunConfig& c, const std::string& v) {
      c.depth.widths.clear();
      std::stringstream ss(v);
      std::string item;
      while (std::getline(ss, item, ',')) c.depth.widths.push_back(parse_number<int>(trim(item)));
    };
    t["data"] = [](RunConfig& c, const std::string& v) { c.data = v; };
    t["out"] = [](RunConfig& c, const std::string& v) { c.out = v; };
    return t;
  }();
  return table;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig c;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) {
      throw ValidationError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    try {
      it->second(c, value);
    } catch (const std::invalid_argument&) {
      throw ValidationError("config line " + std::to_string(lineno) + ": bad value '" + value +
                            "' for " + key);
    } catch (const std::out_of_range&) {
      throw ValidationError("config line " + std::to_string(lineno) + ": value out of range for " +
                            key);
    }
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_text(const RunConfig& c) {
  std::ostringstream os;
  char buf[64];
  auto d = [&](const char* k, double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << k << " = " << buf << "\n";
  };
  auto i = [&](const char* k, long long v) { os << k << " = " << v << "\n"; };
  i("image_size", c.view.image_size);
  i("channels", c.view.channels);
  i("encoder_blocks", c.view.encoder_blocks);
  i("renderer_blocks", c.view.renderer_blocks);
  i("window", c.view.window);
  i("inducing", c.view.inducing);
  i("heads", c.view.heads);
  os << "depth_widths = ";
  for (std::size_t k = 0; k < c.depth.widths.size(); ++k) os << (k ? "," : "") << c.depth.widths[k];
  os << "\n";
  d("min_depth", c.depth.min_depth);
  d("max_depth", c.depth.max_depth);
  d("alpha", c.weights.alpha);
  d("lambda_smooth", c.weights.smooth);
  d("lambda_perceptual", c.weights.perceptual);
  d("lambda_adv", c.weights.adversarial);
  d("lambda_in", c.weights.ts_in);
  d("lambda_out", c.weights.ts_out);
  os << "ts_detach = " << (c.ts_detach ? "true" : "false") << "\n";
  d("lr", c.optim.lr);
  d("beta1", c.optim.beta1);
  d("beta2", c.optim.beta2);
  d("weight_decay", c.optim.weight_decay);
  d("warmup_fraction", c.optim.warmup_fraction);
  d("disc_lr", c.disc_lr);
  i("disc_width", c.disc_width);
  i("steps", c.steps);
  i("batch", c.batch);
  os << "seed = " << c.seed << "\n";
  i("checkpoint_every", c.checkpoint_every);
  d("identity_fraction", c.identity_fraction);
  i("depth_steps", c.depth_steps);
  i("depth_batch", c.depth_batch);
  d("depth_lr", c.depth_lr);
  i("neighbors", c.neighbors);
  i("depth_extra_scenes", c.depth_extra_scenes);
  if (!c.data.empty()) os << "data = " << c.data << "\n";
  if (!c.out.empty()) os << "out = " << c.out << "\n";
  return os.str();
}

}  // namespace nvs
