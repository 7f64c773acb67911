#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

#include "fdg/config.hpp"

namespace fdg {

const char* to_string(Method m) {
  switch (m) {
    case Method::Bp: return "bp";
    case Method::Ddg: return "ddg";
    case Method::Fdg: return "fdg";
  }
  return "?";
}

const char* to_string(RunMode m) { return m == RunMode::Lockstep ? "lockstep" : "freerun"; }

const char* to_string(Ordering o) {
  return o == Ordering::BackwardFirst ? "backward-first" : "forward-first";
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

long parse_long(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long out = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("bad integer for " + key + ": '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("bad number for " + key + ": '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ConfigError("bad flag for " + key + ": '" + v + "' (use on/off)");
}

std::vector<long> parse_long_list(const std::string& key, const std::string& v) {
  std::vector<long> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_long(key, trim(item)));
  return out;
}

std::string join(const std::vector<long>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

// One setter per known key; anything else is rejected.
using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"run.method",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "bp") c.method = Method::Bp;
         else if (v == "ddg") c.method = Method::Ddg;
         else if (v == "fdg") c.method = Method::Fdg;
         else throw ConfigError("bad value for " + k + ": '" + v + "'");
       }},
      {"run.k", [](RunConfig& c, const std::string& k, const std::string& v) { c.k = static_cast<int>(parse_long(k, v)); }},
      {"run.beta", [](RunConfig& c, const std::string& k, const std::string& v) { c.beta = parse_double(k, v); }},
      {"run.ordering",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "backward-first") c.ordering = Ordering::BackwardFirst;
         else if (v == "forward-first") c.ordering = Ordering::ForwardFirst;
         else throw ConfigError("bad value for " + k + ": '" + v + "'");
       }},
      {"run.mode",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "lockstep") c.mode = RunMode::Lockstep;
         else if (v == "freerun") c.mode = RunMode::Freerun;
         else throw ConfigError("bad value for " + k + ": '" + v + "'");
       }},
      {"run.determinism", [](RunConfig& c, const std::string& k, const std::string& v) { c.determinism = parse_bool(k, v); }},
      {"run.precision",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v != "f64" && v != "f32") throw ConfigError("bad value for " + k + ": '" + v + "'");
         c.precision = v;
       }},
      {"run.seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = static_cast<std::uint64_t>(parse_long(k, v)); }},
      {"run.batch_size", [](RunConfig& c, const std::string& k, const std::string& v) { c.batch_size = static_cast<std::size_t>(parse_long(k, v)); }},
      {"run.iterations", [](RunConfig& c, const std::string& k, const std::string& v) { c.iterations = parse_long(k, v); }},
      {"run.epochs", [](RunConfig& c, const std::string& k, const std::string& v) { c.epochs = parse_long(k, v); }},
      {"run.eval_every", [](RunConfig& c, const std::string& k, const std::string& v) { c.eval_every = parse_long(k, v); }},
      {"run.watchdog_ms", [](RunConfig& c, const std::string& k, const std::string& v) { c.watchdog_ms = parse_long(k, v); }},
      {"optimizer.lr", [](RunConfig& c, const std::string& k, const std::string& v) { c.lr = parse_double(k, v); }},
      {"optimizer.momentum", [](RunConfig& c, const std::string& k, const std::string& v) { c.momentum = parse_double(k, v); }},
      {"optimizer.weight_decay", [](RunConfig& c, const std::string& k, const std::string& v) { c.weight_decay = parse_double(k, v); }},
      {"optimizer.milestones", [](RunConfig& c, const std::string& k, const std::string& v) { c.milestone_epochs = parse_long_list(k, v); }},
      {"optimizer.lr_divisor", [](RunConfig& c, const std::string& k, const std::string& v) { c.lr_divisor = parse_double(k, v); }},
      {"optimizer.warmup_epochs", [](RunConfig& c, const std::string& k, const std::string& v) { c.warmup_epochs = parse_long(k, v); }},
      {"optimizer.warmup_lr", [](RunConfig& c, const std::string& k, const std::string& v) { c.warmup_lr = parse_double(k, v); }},
      {"model.arch", [](RunConfig& c, const std::string&, const std::string& v) { c.arch = v; }},
      {"model.partition",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v != "even-layers" && v != "even-params")
           throw ConfigError("bad value for " + k + ": '" + v + "'");
         c.partition = v;
       }},
      {"data.kind", [](RunConfig& c, const std::string&, const std::string& v) { c.data_kind = v; }},
      {"data.n", [](RunConfig& c, const std::string& k, const std::string& v) { c.data_n = static_cast<std::size_t>(parse_long(k, v)); }},
      {"data.test_n", [](RunConfig& c, const std::string& k, const std::string& v) { c.test_n = static_cast<std::size_t>(parse_long(k, v)); }},
      {"data.features", [](RunConfig& c, const std::string& k, const std::string& v) { c.features = static_cast<std::size_t>(parse_long(k, v)); }},
      {"data.classes", [](RunConfig& c, const std::string& k, const std::string& v) { c.classes = static_cast<int>(parse_long(k, v)); }},
      {"data.idx_images", [](RunConfig& c, const std::string&, const std::string& v) { c.idx_images = v; }},
      {"data.idx_labels", [](RunConfig& c, const std::string&, const std::string& v) { c.idx_labels = v; }},
      {"data.idx_test_images", [](RunConfig& c, const std::string&, const std::string& v) { c.idx_test_images = v; }},
      {"data.idx_test_labels", [](RunConfig& c, const std::string&, const std::string& v) { c.idx_test_labels = v; }},
      {"data.standardize", [](RunConfig& c, const std::string& k, const std::string& v) { c.standardize = parse_bool(k, v); }},
      {"output.dir", [](RunConfig& c, const std::string&, const std::string& v) { c.output_dir = v; }},
      {"output.save_weights", [](RunConfig& c, const std::string& k, const std::string& v) { c.save_weights = parse_bool(k, v); }},
  };
  return table;
}

void set_key(RunConfig& cfg, const std::string& full_key, const std::string& value) {
  const auto& table = setters();
  const auto it = table.find(full_key);
  if (it == table.end()) throw ConfigError("unknown config key: " + full_key);
  it->second(cfg, full_key, value);
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": bad section header");
      section = trim(t.substr(1, t.size() - 2));
      if (section != "run" && section != "optimizer" && section != "model" && section != "data" &&
          section != "output")
        throw ConfigError("unknown config section: [" + section + "]");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    if (section.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": key outside any section");
    set_key(cfg, section + "." + trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override must look like section.key=value: " + assignment);
  set_key(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::string serialize_config(const RunConfig& c) {
  std::ostringstream os;
  os << "[run]\n";
  os << "method = " << to_string(c.method) << "\n";
  os << "k = " << c.k << "\n";
  os << "beta = " << fmt(c.beta) << "\n";
  os << "ordering = " << to_string(c.ordering) << "\n";
  os << "mode = " << to_string(c.mode) << "\n";
  os << "determinism = " << (c.determinism ? "on" : "off") << "\n";
  os << "precision = " << c.precision << "\n";
  os << "seed = " << c.seed << "\n";
  os << "batch_size = " << c.batch_size << "\n";
  os << "iterations = " << c.iterations << "\n";
  os << "epochs = " << c.epochs << "\n";
  os << "eval_every = " << c.eval_every << "\n";
  os << "watchdog_ms = " << c.watchdog_ms << "\n";
  os << "\n[optimizer]\n";
  os << "lr = " << fmt(c.lr) << "\n";
  os << "momentum = " << fmt(c.momentum) << "\n";
  os << "weight_decay = " << fmt(c.weight_decay) << "\n";
  os << "milestones = " << join(c.milestone_epochs) << "\n";
  os << "lr_divisor = " << fmt(c.lr_divisor) << "\n";
  os << "warmup_epochs = " << c.warmup_epochs << "\n";
  os << "warmup_lr = " << fmt(c.warmup_lr) << "\n";
  os << "\n[model]\n";
  os << "arch = " << c.arch << "\n";
  os << "partition = " << c.partition << "\n";
  os << "\n[data]\n";
  os << "kind = " << c.data_kind << "\n";
  os << "n = " << c.data_n << "\n";
  os << "test_n = " << c.test_n << "\n";
  os << "features = " << c.features << "\n";
  os << "classes = " << c.classes << "\n";
  os << "idx_images = " << c.idx_images << "\n";
  os << "idx_labels = " << c.idx_labels << "\n";
  os << "idx_test_images = " << c.idx_test_images << "\n";
  os << "idx_test_labels = " << c.idx_test_labels << "\n";
  os << "standardize = " << (c.standardize ? "on" : "off") << "\n";
  os << "\n[output]\n";
  os << "dir = " << c.output_dir << "\n";
  os << "save_weights = " << (c.save_weights ? "on" : "off") << "\n";
  return os.str();
}

}  // namespace fdg
