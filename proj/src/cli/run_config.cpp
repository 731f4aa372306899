#include "specdet/run_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace specdet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw ValidationError("config key '" + key + "': cannot parse '" + value + "' as " + want);
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

std::string fmt(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}
std::string fmt(std::size_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define SIZE_FIELD(name, member)                                                       \
  Field {                                                                              \
    name, [](RunConfig& c, const std::string& v) { c.member = parse_size(name, v); }, \
        [](const RunConfig& c) { return fmt(c.member); }                               \
  }
#define DOUBLE_FIELD(name, member)                                                       \
  Field {                                                                                \
    name, [](RunConfig& c, const std::string& v) { c.member = parse_double(name, v); }, \
        [](const RunConfig& c) { return fmt(c.member); }                                 \
  }
#define BOOL_FIELD(name, member)                                                       \
  Field {                                                                              \
    name, [](RunConfig& c, const std::string& v) { c.member = parse_bool(name, v); }, \
        [](const RunConfig& c) { return fmt(c.member); }                               \
  }
#define CLIP_FIELD(name, member)                                      \
  Field {                                                             \
    name,                                                             \
        [](RunConfig& c, const std::string& v) {                      \
          if (v == "none") {                                          \
            c.member.reset();                                         \
          } else {                                                    \
            c.member = parse_double(name, v);                         \
          }                                                           \
        },                                                            \
        [](const RunConfig& c) {                                      \
          return c.member ? fmt(*c.member) : std::string("none");     \
        }                                                             \
  }

void sync_seeds(RunConfig& c) {
  c.train.seed = c.seed;
  c.tta.seed = c.seed;
  c.synth.seed = c.seed;
  c.train.threads = c.threads;
  c.tta.threads = c.threads;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"seed",
            [](RunConfig& c, const std::string& v) {
              c.seed = parse_u64("seed", v);
              sync_seeds(c);
            },
            [](const RunConfig& c) { return std::to_string(c.seed); }},
      Field{"threads",
            [](RunConfig& c, const std::string& v) {
              c.threads = parse_size("threads", v);
              sync_seeds(c);
            },
            [](const RunConfig& c) { return fmt(c.threads); }},

      SIZE_FIELD("model.bands", model.bands),
      SIZE_FIELD("model.patch_side", model.patch_side),
      DOUBLE_FIELD("model.rho_low", model.rho_low),
      DOUBLE_FIELD("model.rho_mid", model.rho_mid),
      BOOL_FIELD("model.frequency_masking", model.frequency_masking),
      Field{"model.group_activation",
            [](RunConfig& c, const std::string& v) { c.model.group_activation = parse_activation(v); },
            [](const RunConfig& c) { return activation_name(c.model.group_activation); }},
      Field{"model.hidden_activation",
            [](RunConfig& c, const std::string& v) { c.model.hidden_activation = parse_activation(v); },
            [](const RunConfig& c) { return activation_name(c.model.hidden_activation); }},
      SIZE_FIELD("model.group_width", model.group_width),
      SIZE_FIELD("model.adapter_width", model.adapter_width),
      SIZE_FIELD("model.state_size", model.state_size),
      DOUBLE_FIELD("model.initial_step", model.initial_step),
      SIZE_FIELD("model.embed_width", model.embed_width),
      SIZE_FIELD("model.heads", model.heads),
      SIZE_FIELD("model.blocks", model.blocks),
      SIZE_FIELD("model.ffn_width", model.ffn_width),
      SIZE_FIELD("model.prior_hidden", model.prior_hidden),
      SIZE_FIELD("model.ways", model.ways),

      SIZE_FIELD("train.iterations", train.iterations),
      SIZE_FIELD("train.batch", train.episodes_per_batch),
      SIZE_FIELD("train.ways", train.ways),
      SIZE_FIELD("train.shots", train.shots),
      SIZE_FIELD("train.queries", train.queries),
      DOUBLE_FIELD("train.beta", train.beta),
      DOUBLE_FIELD("train.gamma", train.gamma),
      DOUBLE_FIELD("train.lambda", train.lambda),
      DOUBLE_FIELD("train.q_pos", train.q_pos),
      DOUBLE_FIELD("train.q_neg", train.q_neg),
      DOUBLE_FIELD("train.lr", train.optim.learning_rate),
      DOUBLE_FIELD("train.weight_decay", train.optim.weight_decay),
      DOUBLE_FIELD("train.beta1", train.optim.beta1),
      DOUBLE_FIELD("train.beta2", train.optim.beta2),
      DOUBLE_FIELD("train.epsilon", train.optim.epsilon),
      CLIP_FIELD("train.max_grad_norm", train.optim.max_grad_norm),
      Field{"train.frozen",
            [](RunConfig& c, const std::string& v) {
              c.train.frozen_prefixes.clear();
              std::stringstream ss(v);
              std::string item;
              while (std::getline(ss, item, ',')) {
                item = trim(item);
                if (!item.empty()) c.train.frozen_prefixes.push_back(item);
              }
            },
            [](const RunConfig& c) {
              std::string out;
              for (const auto& p : c.train.frozen_prefixes) out += (out.empty() ? "" : ",") + p;
              return out;
            }},

      SIZE_FIELD("tta.iterations", tta.iterations),
      DOUBLE_FIELD("tta.eta", tta.eta),
      DOUBLE_FIELD("tta.q_pos", tta.q_pos),
      DOUBLE_FIELD("tta.q_neg", tta.q_neg),
      SIZE_FIELD("tta.refresh_every", tta.refresh_every),
      DOUBLE_FIELD("tta.lr", tta.optim.learning_rate),
      DOUBLE_FIELD("tta.weight_decay", tta.optim.weight_decay),
      DOUBLE_FIELD("tta.beta1", tta.optim.beta1),
      DOUBLE_FIELD("tta.beta2", tta.optim.beta2),
      DOUBLE_FIELD("tta.epsilon", tta.optim.epsilon),
      CLIP_FIELD("tta.max_grad_norm", tta.optim.max_grad_norm),
      DOUBLE_FIELD("tta.noise_std", tta.augment.noise_std),
      BOOL_FIELD("tta.rotations", tta.augment.rotations),
      BOOL_FIELD("tta.flips", tta.augment.flips),

      SIZE_FIELD("synth.height", synth.height),
      SIZE_FIELD("synth.width", synth.width),
      SIZE_FIELD("synth.bands", synth.bands),
      SIZE_FIELD("synth.background_classes", synth.background_classes),
      DOUBLE_FIELD("synth.length_scale", synth.length_scale),
      SIZE_FIELD("synth.implant_count", synth.implant_count),
      DOUBLE_FIELD("synth.alpha_min", synth.alpha_min),
      DOUBLE_FIELD("synth.alpha_max", synth.alpha_max),
      DOUBLE_FIELD("synth.noise_std", synth.noise_std),
      DOUBLE_FIELD("synth.within_class_std", synth.within_class_std),
      SIZE_FIELD("synth.regions_per_class", synth.regions_per_class),

      SIZE_FIELD("source.materials", source.materials),
      SIZE_FIELD("source.implants_per_material", source.implants_per_material),
      DOUBLE_FIELD("prior.length_scale", prior.length_scale),
      DOUBLE_FIELD("prior.mean", prior.mean),
      DOUBLE_FIELD("prior.amplitude", prior.amplitude),

      SIZE_FIELD("eval.grid", grid),
  };
  return table;
}

#undef SIZE_FIELD
#undef DOUBLE_FIELD
#undef BOOL_FIELD
#undef CLIP_FIELD

const Field& find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw ValidationError("unknown config key '" + key + "'");
}

void apply_lines(RunConfig& cfg, std::istream& is, const std::filesystem::path& base_dir,
                 const std::string& origin, int depth, std::set<std::string>* assigned) {
  if (depth > 16) throw ValidationError("config include depth exceeds 16 at " + origin);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (line.rfind("include", 0) == 0 && (line.size() == 7 || line[7] == ' ' || line[7] == '\t')) {
      const std::string target = trim(line.substr(7));
      if (target.empty()) throw ValidationError(where + ": include without a path");
      std::filesystem::path p = target;
      if (p.is_relative()) p = base_dir / p;
      std::ifstream inc(p);
      if (!inc) throw ValidationError(where + ": cannot open included file " + p.string());
      apply_lines(cfg, inc, p.parent_path(), p.string(), depth + 1, assigned);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    try {
      cfg.set(key, trim(line.substr(eq + 1)));
      if (assigned) assigned->insert(key);
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
  }
}

}  // namespace

RunConfig::RunConfig() { sync_seeds(*this); }

void RunConfig::set(const std::string& key, const std::string& value) {
  find_field(key).set(*this, value);
}

std::string RunConfig::get(const std::string& key) const { return find_field(key).get(*this); }

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> out = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return out;
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(*this) + "\n";
  return out;
}

void RunConfig::validate() const {
  if (threads == 0) throw ValidationError("threads must be >= 1");
  if (grid == 0) throw ValidationError("eval.grid must be >= 1");
  model.validate();
  train.validate();
  tta.validate();
  synth.validate();
  if (train.ways != model.ways) {
    throw ValidationError("train.ways (" + std::to_string(train.ways) + ") must equal model.ways (" +
                          std::to_string(model.ways) + ")");
  }
  if (synth.bands != model.bands) {
    throw ValidationError("synth.bands must equal model.bands");
  }
  if (source.materials == 0 || source.implants_per_material == 0) {
    throw ValidationError("source.materials and source.implants_per_material must be >= 1");
  }
  if (!(prior.length_scale > 0) || !(prior.amplitude >= 0)) {
    throw ValidationError("prior.length_scale must be > 0 and prior.amplitude >= 0");
  }
}

void apply_config_text(RunConfig& cfg, const std::string& text,
                       const std::filesystem::path& base_dir, std::set<std::string>* assigned) {
  std::istringstream is(text);
  apply_lines(cfg, is, base_dir, "<text>", 0, assigned);
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path,
                       std::set<std::string>* assigned) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open config file " + path.string());
  apply_lines(cfg, is, path.parent_path(), path.string(), 0, assigned);
}

void write_run_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write run config: " + path.string());
  os << cfg.serialize();
  if (!os) throw std::runtime_error("failed writing run config: " + path.string());
}

}  // namespace specdet
