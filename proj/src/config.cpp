#include "nisnn/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "nisnn/errors.hpp"

namespace nisnn {

namespace fs = std::filesystem;

namespace {

template <typename T>
T parse_number(const std::string& field, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ConfigError(field + ": '" + text + "' is not a valid number");
  }
  return v;
}

using Setter = std::function<void(RunConfig&, const std::string&, const fs::path&)>;

std::size_t parse_size(const std::string& field, const std::string& v) {
  if (!v.empty() && v.front() == '-') throw ConfigError(field + ": must not be negative");
  return parse_number<std::size_t>(field, v);
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto size_field = [&t](const std::string& key, std::size_t NetworkSpec::*member) {
      t[key] = [key, member](RunConfig& c, const std::string& v, const fs::path&) {
        c.network.*member = parse_size(key, v);
      };
    };
    auto double_field = [&t](const std::string& key, double NetworkSpec::*member) {
      t[key] = [key, member](RunConfig& c, const std::string& v, const fs::path&) {
        c.network.*member = parse_number<double>(key, v);
      };
    };
    t["network.family"] = [](RunConfig& c, const std::string& v, const fs::path&) {
      try {
        c.network.family = parse_family(v);
      } catch (const ConfigError& e) {
        throw ConfigError(std::string("network.family: ") + e.what());
      }
    };
    t["network.attention"] = [](RunConfig& c, const std::string& v, const fs::path&) {
      try {
        c.network.attention.kind = parse_attention_kind(v);
      } catch (const ConfigError& e) {
        throw ConfigError(std::string("network.attention: ") + e.what());
      }
    };
    size_field("network.channels", &NetworkSpec::channels);
    size_field("network.timepieces", &NetworkSpec::timepieces);
    size_field("network.steps", &NetworkSpec::steps);
    size_field("network.encoder_kernel", &NetworkSpec::encoder_kernel);
    size_field("network.classifier_kernel", &NetworkSpec::classifier_kernel);
    size_field("network.hidden", &NetworkSpec::hidden);
    size_field("network.classes", &NetworkSpec::classes);
    double_field("network.tau", &NetworkSpec::tau);
    double_field("network.delta_t", &NetworkSpec::delta_t);
    double_field("network.v_th", &NetworkSpec::v_th);
    t["network.d1"] = [](RunConfig& c, const std::string& v, const fs::path&) {
      c.network.attention.d1 = parse_size("network.d1", v);
    };
    t["network.d2"] = [](RunConfig& c, const std::string& v, const fs::path&) {
      c.network.attention.d2 = parse_size("network.d2", v);
    };
    t["network.d"] = [](RunConfig& c, const std::string& v, const fs::path&) {
      c.network.attention.d = parse_size("network.d", v);
    };
    t["network.alpha_init"] = [](RunConfig& c, const std::string& v, const fs::path&) {
      c.network.attention.alpha_init = parse_number<float>("network.alpha_init", v);
    };
    t["train.lr"] = [](RunConfig& c, const std::string& v, const fs::path&) {
      c.train.lr = parse_number<float>("train.lr", v);
    };
    t["train.epochs"] = [](RunConfig& c, const std::string& v, const fs::path&) {
      c.train.epochs = parse_size("train.epochs", v);
    };
    t["train.pretrain_epochs"] = [](RunConfig& c, const std::string& v, const fs::path&) {
      c.train.pretrain_epochs = parse_size("train.pretrain_epochs", v);
    };
    t["train.batch"] = [](RunConfig& c, const std::string& v, const fs::path&) {
      c.train.batch = parse_size("train.batch", v);
    };
    t["train.seed"] = [](RunConfig& c, const std::string& v, const fs::path&) {
      c.train.seed = parse_number<std::uint64_t>("train.seed", v);
    };
    t["train.beta1"] = [](RunConfig& c, const std::string& v, const fs::path&) {
      c.train.beta1 = parse_number<float>("train.beta1", v);
    };
    t["train.beta2"] = [](RunConfig& c, const std::string& v, const fs::path&) {
      c.train.beta2 = parse_number<float>("train.beta2", v);
    };
    t["train.eps"] = [](RunConfig& c, const std::string& v, const fs::path&) {
      c.train.eps = parse_number<float>("train.eps", v);
    };
    t["train.schedule"] = [](RunConfig& c, const std::string& v, const fs::path&) {
      try {
        c.train.schedule = parse_schedule(v);
      } catch (const ConfigError& e) {
        throw ConfigError(std::string("train.schedule: ") + e.what());
      }
    };
    t["train.eval_batch"] = [](RunConfig& c, const std::string& v, const fs::path&) {
      c.eval_batch = parse_size("train.eval_batch", v);
    };
    t["data.path"] = [](RunConfig& c, const std::string& v, const fs::path& base) {
      c.data_path = fs::path(v).is_absolute() || base.empty() ? fs::path(v) : base / v;
    };
    t["output.dir"] = [](RunConfig& c, const std::string& v, const fs::path& base) {
      c.out_dir = fs::path(v).is_absolute() || base.empty() ? fs::path(v) : base / v;
    };
    return t;
  }();
  return table;
}

void set_field(RunConfig& cfg, const std::string& key, const std::string& value, const fs::path& base) {
  auto it = setters().find(key);
  if (it == setters().end()) throw ConfigError(key + ": unknown key");
  it->second(cfg, value, base);
}

}  // namespace

void RunConfig::validate() const {
  network.validate();
  train.validate();
  if (eval_batch == 0) throw ConfigError("train.eval_batch: must be positive");
}

RunConfig parse_run_config(const std::string& text, const fs::path& base_dir) {
  std::istringstream in(text);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_config(in);
  } catch (const CLI::Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig cfg;
  bool have_version = false;
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;  // section markers
    const std::string key = item.fullname();
    if (item.inputs.size() != 1) throw ConfigError(key + ": expected exactly one value");
    const std::string& value = item.inputs.front();
    if (key == "schema_version") {
      int v = parse_number<int>("schema_version", value);
      if (v != kConfigSchemaVersion) {
        throw ConfigError("schema_version: unsupported version " + value + " (expected " +
                          std::to_string(kConfigSchemaVersion) + ")");
      }
      have_version = true;
      continue;
    }
    set_field(cfg, key, value, base_dir);
  }
  if (!have_version) throw ConfigError("schema_version: missing");
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path.parent_path());
}

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides, const fs::path& base_dir) {
  for (const auto& o : overrides) {
    auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not of the form section.key=value");
    set_field(cfg, o.substr(0, eq), o.substr(eq + 1), base_dir);
  }
}

std::string render_run_config(const RunConfig& c) {
  std::ostringstream o;
  o << "schema_version = " << kConfigSchemaVersion << "\n\n[network]\n"
    << "family = \"" << to_string(c.network.family) << "\"\n"
    << "attention = \"" << to_string(c.network.attention.kind) << "\"\n"
    << "channels = " << c.network.channels << "\n"
    << "timepieces = " << c.network.timepieces << "\n"
    << "steps = " << c.network.steps << "\n"
    << "tau = " << c.network.tau << "\n"
    << "delta_t = " << c.network.delta_t << "\n"
    << "v_th = " << c.network.v_th << "\n"
    << "d1 = " << c.network.attention.d1 << "\n"
    << "d2 = " << c.network.attention.d2 << "\n"
    << "d = " << c.network.attention.d << "\n"
    << "alpha_init = " << c.network.attention.alpha_init << "\n\n[train]\n"
    << "lr = " << c.train.lr << "\n"
    << "epochs = " << c.train.epochs << "\n"
    << "pretrain_epochs = " << c.train.pretrain_epochs << "\n"
    << "batch = " << c.train.batch << "\n"
    << "seed = " << c.train.seed << "\n"
    << "schedule = \"" << to_string(c.train.schedule) << "\"\n\n[data]\n"
    << "path = \"" << c.data_path.generic_string() << "\"\n\n[output]\n"
    << "dir = \"" << c.out_dir.generic_string() << "\"\n";
  return o.str();
}

}  // namespace nisnn
