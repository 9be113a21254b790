#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "igdm/errors.hpp"
#include "igdm/rng.hpp"

namespace igdm {

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Flat configuration: every knob of the pipeline with the published defaults.
// Files use one `key = value` per line; CLI flags override file values.
struct RunConfig {
  uint64_t seed = 42;

  // Embeddings and propagation
  int d = 64;        // embedding size
  int l_ui = 2;      // interaction-graph convolution layers
  int l_ii = 1;      // item-graph convolution layers

  // Item graphs
  int k = 10;              // top-k neighbors per item
  double epsilon = 2.0;    // behavioral pruning threshold
  double phi_visual = 0.1; // visual modality weight; textual takes the rest

  // Objective
  double lambda1 = 0.1;   // contrastive weight
  double lambda2 = 1e-7;  // L2 weight
  double tau = 0.2;       // contrastive temperature

  // Diffusion
  int big_t = 5;            // diffusion steps T
  double s = 0.01;          // noise scale
  double alpha_min = 1e-4;
  double alpha_max = 0.02;
  int k_d = 1000;           // CD-Net latent dimension
  double omega = 2.0;       // guidance strength
  double p_mu = 0.1;        // condition dropout probability
  bool use_codec = true;    // encoder/decoder pair in CD-Net
  int refresh_interval = 1; // BGD refresh every R epochs
  int bgd_passes = 1;       // item passes per refresh
  int bgd_batch = 512;

  // Recommender training
  bool use_item_graphs = true;  // false = interaction-only baseline
  int bpr_batch = 2048;
  double lr = 0.001;
  int patience = 20;
  int max_epochs = 1000;
  std::string score_rep = "diffusion";  // "diffusion" = h_i, "semantic" = h_hat_i

  void validate() const {
    if (d < 1 || l_ui < 0 || l_ii < 0 || k < 1) {
      throw ConfigError("config: d >= 1, layers >= 0 and k >= 1 required");
    }
    if (phi_visual < 0.0 || phi_visual > 1.0) {
      throw ConfigError("config: phi_visual must lie in [0,1]");
    }
    if (tau <= 0.0) throw ConfigError("config: tau must be positive");
    if (lambda1 < 0.0 || lambda2 < 0.0) throw ConfigError("config: lambdas must be nonnegative");
    if (p_mu < 0.0 || p_mu > 1.0) throw ConfigError("config: p_mu must lie in [0,1]");
    if (refresh_interval < 1) throw ConfigError("config: refresh_interval must be >= 1");
    if (bgd_batch < 1 || bpr_batch < 1 || bgd_passes < 1) {
      throw ConfigError("config: batch sizes and bgd_passes must be >= 1");
    }
    if (max_epochs < 1 || patience < 1) {
      throw ConfigError("config: max_epochs and patience must be >= 1");
    }
    if (score_rep != "diffusion" && score_rep != "semantic") {
      throw ConfigError("config: score_rep must be `diffusion` or `semantic`");
    }
    if (big_t < 1 || k_d < 1) throw ConfigError("config: T and k_d must be >= 1");
  }

  // Every field, sorted by key: the canonical resolved form embedded in
  // reports and checkpoints.
  std::string canonical_text() const {
    std::map<std::string, std::string> kv;
    kv["seed"] = std::to_string(seed);
    kv["d"] = std::to_string(d);
    kv["l_ui"] = std::to_string(l_ui);
    kv["l_ii"] = std::to_string(l_ii);
    kv["k"] = std::to_string(k);
    kv["epsilon"] = format_double(epsilon);
    kv["phi_visual"] = format_double(phi_visual);
    kv["lambda1"] = format_double(lambda1);
    kv["lambda2"] = format_double(lambda2);
    kv["tau"] = format_double(tau);
    kv["T"] = std::to_string(big_t);
    kv["s"] = format_double(s);
    kv["alpha_min"] = format_double(alpha_min);
    kv["alpha_max"] = format_double(alpha_max);
    kv["k_d"] = std::to_string(k_d);
    kv["omega"] = format_double(omega);
    kv["p_mu"] = format_double(p_mu);
    kv["use_codec"] = use_codec ? "true" : "false";
    kv["refresh_interval"] = std::to_string(refresh_interval);
    kv["bgd_passes"] = std::to_string(bgd_passes);
    kv["bgd_batch"] = std::to_string(bgd_batch);
    kv["use_item_graphs"] = use_item_graphs ? "true" : "false";
    kv["bpr_batch"] = std::to_string(bpr_batch);
    kv["lr"] = format_double(lr);
    kv["patience"] = std::to_string(patience);
    kv["max_epochs"] = std::to_string(max_epochs);
    kv["score_rep"] = score_rep;
    std::string out;
    for (const auto& [key, value] : kv) out += key + " = " + value + "\n";
    return out;
  }

  uint64_t hash() const { return detail::fnv1a64(canonical_text()); }
};

namespace detail {

inline std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t");
  size_t e = s.find_last_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: boolean expected for `" + key + "`, got `" + v + "`");
}

}  // namespace detail

inline void apply_setting(RunConfig& cfg, const std::string& key, const std::string& raw) {
  const std::string value = detail::trim(raw);
  try {
    if (key == "seed") cfg.seed = std::stoull(value);
    else if (key == "d") cfg.d = std::stoi(value);
    else if (key == "l_ui") cfg.l_ui = std::stoi(value);
    else if (key == "l_ii") cfg.l_ii = std::stoi(value);
    else if (key == "k") cfg.k = std::stoi(value);
    else if (key == "epsilon") cfg.epsilon = std::stod(value);
    else if (key == "phi_visual") cfg.phi_visual = std::stod(value);
    else if (key == "lambda1") cfg.lambda1 = std::stod(value);
    else if (key == "lambda2") cfg.lambda2 = std::stod(value);
    else if (key == "tau") cfg.tau = std::stod(value);
    else if (key == "T") cfg.big_t = std::stoi(value);
    else if (key == "s") cfg.s = std::stod(value);
    else if (key == "alpha_min") cfg.alpha_min = std::stod(value);
    else if (key == "alpha_max") cfg.alpha_max = std::stod(value);
    else if (key == "k_d") cfg.k_d = std::stoi(value);
    else if (key == "omega") cfg.omega = std::stod(value);
    else if (key == "p_mu") cfg.p_mu = std::stod(value);
    else if (key == "use_codec") cfg.use_codec = detail::parse_bool(value, key);
    else if (key == "refresh_interval") cfg.refresh_interval = std::stoi(value);
    else if (key == "bgd_passes") cfg.bgd_passes = std::stoi(value);
    else if (key == "bgd_batch") cfg.bgd_batch = std::stoi(value);
    else if (key == "use_item_graphs") cfg.use_item_graphs = detail::parse_bool(value, key);
    else if (key == "bpr_batch") cfg.bpr_batch = std::stoi(value);
    else if (key == "lr") cfg.lr = std::stod(value);
    else if (key == "patience") cfg.patience = std::stoi(value);
    else if (key == "max_epochs") cfg.max_epochs = std::stoi(value);
    else if (key == "score_rep") cfg.score_rep = value;
    else throw ConfigError("config: unknown key `" + key + "`");
  } catch (const std::invalid_argument&) {
    throw ConfigError("config: cannot parse value `" + value + "` for key `" + key + "`");
  } catch (const std::out_of_range&) {
    throw ConfigError("config: value `" + value + "` out of range for key `" + key + "`");
  }
}

inline RunConfig parse_config_text(const std::string& text, RunConfig base = {}) {
  std::istringstream in(text);
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = detail::trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected `key = value`");
    }
    apply_setting(base, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

inline RunConfig load_config_file(const std::string& path, RunConfig base = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config_text(text, base);
}

// The published ablations: each is a pure transform of a base config.
inline void apply_ablation(RunConfig& cfg, const std::string& name) {
  if (name == "wo-ci") {
    cfg.omega = -1.0;  // generation ignores the condition
    cfg.p_mu = 1.0;    // training always sees the empty token
  } else if (name == "wo-cl") {
    cfg.lambda1 = 0.0;
  } else if (name == "wo-ed") {
    cfg.use_codec = false;
  } else {
    throw ConfigError("unknown ablation `" + name + "` (expected wo-ci, wo-cl or wo-ed)");
  }
}

inline void apply_variant(RunConfig& cfg, const std::string& name) {
  if (name == "igdmrec") {
    cfg.refresh_interval = 1;
  } else if (name == "igdmrec-star") {
    cfg.refresh_interval = 5;
  } else if (name == "no-item-graph") {
    cfg.use_item_graphs = false;
    cfg.lambda1 = 0.0;  // no dual item views to contrast
  } else {
    throw ConfigError("unknown variant `" + name +
                      "` (expected igdmrec, igdmrec-star or no-item-graph)");
  }
}

}  // namespace igdm
