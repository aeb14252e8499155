#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "ctfs/augment.hpp"
#include "ctfs/losses.hpp"
#include "ctfs/model.hpp"
#include "ctfs/mvra.hpp"

namespace ctfs {

/// Which teachers participate in the post-warm-up rotation. `general_only`
/// is the single-teacher ablation arm.
enum class RotationMode { rotating, general_only };

inline RotationMode rotation_from_string(const std::string& s) {
  if (s == "rotating") return RotationMode::rotating;
  if (s == "general_only") return RotationMode::general_only;
  throw ConfigError("teachers.rotation must be 'rotating' or 'general_only', got '" + s + "'");
}

inline const char* to_string(RotationMode m) {
  return m == RotationMode::rotating ? "rotating" : "general_only";
}

/// Every hyperparameter, split choice, seed and path for one run. Flat
/// key = value file with [section] headers; unknown keys are rejected and
/// command-line overrides are applied after the file parse.
struct ExperimentConfig {
  // [dataset]
  std::string dataset_path;
  double ratio = 0.05;        // labeled fraction of the training ids
  uint64_t split_seed = 1;

  // [model]
  std::string widths = "8,16,32,48";

  // [optimizer]
  AdamWConfig optimizer;

  // [teachers]
  double ema_decay = 0.999;
  long warmup_epochs = 10;    // supervised-only epochs before rotation
  RotationMode rotation = RotationMode::rotating;

  // [mvra]
  bool mvra_enabled = true;
  MvraConfig mvra;            // grid_size, views, delta

  // [loss]
  LossConfig loss;            // lambda_u, psi, soft_targets

  // [augment]
  AugmentOptions augment;
  bool labeled_weak = true;   // weak-augment labeled pairs during training

  // [trainer]
  long epochs = 50;
  int batch_labeled = 4;
  int batch_unlabeled = 4;
  uint64_t seed = 1;
  std::string run_dir = "runs/run";
  long checkpoint_every = 0;  // extra periodic checkpoints; 0 = last/best only
  bool include_background_miou = true;

  SegNetConfig net_config(int num_classes) const {
    SegNetConfig nc;
    nc.num_classes = num_classes;
    std::stringstream ss(widths);
    std::string tok;
    std::vector<int> ws;
    while (std::getline(ss, tok, ',')) ws.push_back(std::stoi(tok));
    if (ws.size() != 4) throw ConfigError("model.widths must list four channel counts");
    std::copy(ws.begin(), ws.end(), nc.widths.begin());
    return nc;
  }

  /// Run directory after applying the CTFS_RUN_ROOT override.
  std::string resolved_run_dir() const {
    const char* root = std::getenv("CTFS_RUN_ROOT");
    std::filesystem::path p(run_dir);
    if (root && *root && p.is_relative()) return (std::filesystem::path(root) / p).string();
    return p.string();
  }
};

namespace detail {

using FieldRef = std::variant<double*, float*, long*, int*, uint64_t*, bool*, std::string*>;

struct FieldEntry {
  std::string section, key;
  FieldRef ref;
};

inline std::vector<FieldEntry> config_fields(ExperimentConfig& c) {
  return {
      {"dataset", "path", &c.dataset_path},
      {"dataset", "ratio", &c.ratio},
      {"dataset", "split_seed", &c.split_seed},
      {"model", "widths", &c.widths},
      {"optimizer", "lr_encoder", &c.optimizer.lr_encoder},
      {"optimizer", "lr_decoder", &c.optimizer.lr_decoder},
      {"optimizer", "weight_decay", &c.optimizer.weight_decay},
      {"teachers", "ema_decay", &c.ema_decay},
      {"teachers", "warmup_epochs", &c.warmup_epochs},
      {"mvra", "enabled", &c.mvra_enabled},
      {"mvra", "grid_size", &c.mvra.grid_size},
      {"mvra", "views", &c.mvra.views},
      {"mvra", "delta", &c.mvra.delta},
      {"loss", "lambda_u", &c.loss.lambda_u},
      {"loss", "psi", &c.loss.psi},
      {"loss", "soft_targets", &c.loss.soft_targets},
      {"augment", "scale_min", &c.augment.weak.scale_min},
      {"augment", "scale_max", &c.augment.weak.scale_max},
      {"augment", "hflip_prob", &c.augment.weak.hflip_prob},
      {"augment", "alpha_min", &c.augment.shadow.alpha_min},
      {"augment", "alpha_max", &c.augment.shadow.alpha_max},
      {"augment", "span_min_deg", &c.augment.shadow.span_min_deg},
      {"augment", "span_max_deg", &c.augment.shadow.span_max_deg},
      {"augment", "gamma_min", &c.augment.atten.gamma_min},
      {"augment", "gamma_max", &c.augment.atten.gamma_max},
      {"augment", "brightness", &c.augment.strong.brightness},
      {"augment", "contrast", &c.augment.strong.contrast},
      {"augment", "blur_prob", &c.augment.strong.blur_prob},
      {"augment", "blur_sigma_min", &c.augment.strong.blur_sigma_min},
      {"augment", "blur_sigma_max", &c.augment.strong.blur_sigma_max},
      {"augment", "sonar_weak_geometric", &c.augment.sonar_weak_geometric},
      {"augment", "labeled_weak", &c.labeled_weak},
      {"trainer", "epochs", &c.epochs},
      {"trainer", "batch_labeled", &c.batch_labeled},
      {"trainer", "batch_unlabeled", &c.batch_unlabeled},
      {"trainer", "seed", &c.seed},
      {"trainer", "run_dir", &c.run_dir},
      {"trainer", "checkpoint_every", &c.checkpoint_every},
      {"trainer", "include_background_miou", &c.include_background_miou},
  };
}

inline void assign_field(const FieldEntry& f, const std::string& value) {
  const std::string where = f.section + "." + f.key;
  try {
    std::visit(
        [&](auto* p) {
          using P = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<P, std::string>) {
            *p = value;
          } else if constexpr (std::is_same_v<P, bool>) {
            if (value == "true" || value == "1") *p = true;
            else if (value == "false" || value == "0") *p = false;
            else throw ConfigError("expected boolean");
          } else if constexpr (std::is_same_v<P, double>) {
            *p = std::stod(value);
          } else if constexpr (std::is_same_v<P, float>) {
            *p = std::stof(value);
          } else if constexpr (std::is_same_v<P, long>) {
            *p = std::stol(value);
          } else if constexpr (std::is_same_v<P, int>) {
            *p = std::stoi(value);
          } else {
            *p = std::stoull(value);
          }
        },
        f.ref);
  } catch (const std::exception&) {
    throw ConfigError("bad value for " + where + ": '" + value + "'");
  }
}

inline std::string field_to_string(const FieldEntry& f) {
  std::ostringstream out;
  std::visit(
      [&](auto* p) {
        using P = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<P, std::string>) out << *p;
        else if constexpr (std::is_same_v<P, bool>) out << (*p ? "true" : "false");
        else if constexpr (std::is_same_v<P, double> || std::is_same_v<P, float>) {
          char buf[64];
          std::snprintf(buf, sizeof(buf), "%.17g", static_cast<double>(*p));
          out << buf;
        } else out << *p;
      },
      f.ref);
  return out.str();
}

}  // namespace detail

/// Applies one `key=value` or `section.key=value` override.
inline void apply_override(ExperimentConfig& cfg, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override must look like key=value, got '" + kv + "'");
  std::string key = kv.substr(0, eq);
  const std::string value = kv.substr(eq + 1);

  if (key == "teachers.rotation" || key == "rotation") {
    cfg.rotation = rotation_from_string(value);
    return;
  }
  auto fields = detail::config_fields(cfg);
  const auto dot = key.find('.');
  const std::string section = dot == std::string::npos ? "" : key.substr(0, dot);
  const std::string name = dot == std::string::npos ? key : key.substr(dot + 1);
  const detail::FieldEntry* match = nullptr;
  for (const auto& f : fields) {
    if (f.key != name) continue;
    if (!section.empty() && f.section != section) continue;
    if (match) throw ConfigError("ambiguous override key '" + key + "'; qualify with section");
    match = &f;
  }
  if (!match) throw ConfigError("unknown config key '" + key + "'");
  detail::assign_field(*match, value);
}

/// Parses a config file: `[section]` headers, `key = value` lines, `#`
/// comments. Unknown keys are an error.
inline ExperimentConfig load_config(const std::string& path,
                                    const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  ExperimentConfig cfg;
  auto fields = detail::config_fields(cfg);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section == "teachers" && key == "rotation") {
      cfg.rotation = rotation_from_string(value);
      continue;
    }
    bool found = false;
    for (const auto& f : fields) {
      if (f.section == section && f.key == key) {
        detail::assign_field(f, value);
        found = true;
        break;
      }
    }
    if (!found)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown key '" + section +
                        "." + key + "'");
  }
  for (const auto& kv : overrides) apply_override(cfg, kv);
  return cfg;
}

/// Serializes the fully-resolved configuration (frozen per run directory).
inline std::string dump_config(const ExperimentConfig& cfg) {
  auto fields = detail::config_fields(const_cast<ExperimentConfig&>(cfg));
  std::ostringstream out;
  std::string section;
  for (const auto& f : fields) {
    if (f.section != section) {
      if (!section.empty()) out << "\n";
      section = f.section;
      out << "[" << section << "]\n";
    }
    out << f.key << " = " << detail::field_to_string(f) << "\n";
    if (f.section == "teachers" && f.key == "warmup_epochs")
      out << "rotation = " << to_string(cfg.rotation) << "\n";
  }
  return out.str();
}

inline void save_config(const ExperimentConfig& cfg, const std::string& path) {
  std::filesystem::create_directories(std::filesystem::path(path).parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config copy: " + path);
  out << dump_config(cfg);
}

}  // namespace ctfs
